"""Multi-view discriminant NMF with softmax cross-entropy label supervision.

Each view is factorized into common/view-specific x discriminative/
non-discriminative blocks; the discriminative coefficients feed a linear
softmax classifier.  Fitting is projected block coordinate descent.
"""
from .errors import (ClassTooSmallError, DataFormatError, DimensionMismatchError, FormatVersionError,
                     MVDLCSLError, NumericalError, ValidationError)
from .evaluation import CVResult, accuracy, cross_validate, knn_baseline, nmf_baseline, stratified_kfold
from .inference import Coefficients, discriminative_features, fold_in, predict_labels, predict_proba
from .io import (export_embeddings, export_trace, load_dataset, load_model, save_dataset, save_model)
from .model import (UNLABELED, BlockDims, FactorModel, Hyperparams, LossMode, MultiViewDataset,
                    SolverTrace, init_model, validate)
from .objective import ObjectiveBreakdown, total_objective
from .solver import fit
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

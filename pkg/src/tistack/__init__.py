"""tistack: multi-TI synthesis, diffusion features, and sparse-label metrics.

Library + CLI for a structural/diffusion MRI feature pipeline: joint
bias handling and WM normalization, PD/T1 fitting from an MPRAGE/FGATIR
pair, multi-TI synthesis, tensor scalar maps, 5D orientation mapping,
manifest-driven feature stacking, label-scheme unification, and
evaluation metrics built for sparse ground truth.
"""

__version__ = "0.1.0"

from .errors import (FormatError, GridMismatchError, InputError, NumericalError,
                     TiStackError, UnmappedLabelError, UnsupportedError, ValidationError)
from .volume import (AFFINE_TOL, GridSignature, Intent, Volume, center_crop,
                     check_same_grid, default_crop_center)
from .nifti import read_nifti, write_nifti
from .qmri import (IRAcquisition, MultiTISpec, QMaps, fit_pd_t1, fit_qmaps,
                   ir_signal, multi_ti_count, null_ti, synth_multi_ti, synth_ti)
from .harmonize import (FcmResult, apply_bias, fcm, harmonic_bias, wm_mask,
                        wm_mean_normalize)
from .dti import (DiffusionSet, EigenSystem, TensorField, design_matrix,
                  eig3_sym, eigen_field, fit_tensor, forward_signals,
                  read_bvals_bvecs, scalar_maps, westin, westin_maps,
                  write_bvals_bvecs)
from .knutsson import K_NORM, edge_map, knutsson_field, knutsson_map
from .labels import (LabelEntry, LabelScheme, UnificationMap, builtin_scheme,
                     compose, default_unification_map, load_mapping, load_scheme,
                     remap, validate_mapping)
from .metrics import (ClassMetrics, MetricsReport, dice, evaluate_labels,
                      masked_soft_tpr_loss, onehot_encode, tpr_per_class,
                      weighted_average)
from .phantom import (PhantomSpec, Region, default_gradients, fibonacci_directions,
                      generate_phantom, nuclei_spec, spec_from_doc, spec_to_doc)
from .stack import (ChannelSource, StackManifest, assemble_feature_stack,
                    manifest_from_doc, manifest_from_products)
from .pipeline import PipelineConfig, config_from_doc, load_config, run_pipeline

__all__ = [name for name in dir() if not name.startswith("_")]

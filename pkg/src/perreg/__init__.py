"""Activation regularization toward N(0, I) via random 1-D projections,
with exact one-dimensional optimal-transport metrics, baseline
regularizers/normalizers, and a small manual-backprop training engine."""

from .special_fns import (RngStream, erf, sample_standard_gaussian,
                          sample_unit_sphere, std_normal_cdf, std_normal_pdf,
                          std_normal_quantile)
from .ot1d import (w1_empirical_empirical, w1_empirical_empirical_rows,
                   w1_empirical_gaussian, w1_empirical_gaussian_rows)
from .sliced import (ActivationBatch, SliceSet, draw_slices, project,
                     sw1_empirical, sw1_to_gaussian)
from .per import (RegConfig, SQRT_2_OVER_PI, apply_per_backward, per_grad,
                  per_loss, per_point_grad, per_point_loss)
from .baselines import (BnState, bn_backward, bn_forward, huber,
                        lp_activation_penalty, lp_normalize, pseudo_huber)
from .nn import (ACTIVATIONS, DenseLayer, Gradients, Network, TrainConfig,
                 TrainingDiverged, backward, forward, init_network,
                 init_velocity, sgd_step, softmax_cross_entropy, train_epoch,
                 trainable_arrays, gradient_arrays)
from .harness import (ConfigError, DataFormatError, DatasetConfig,
                      ExperimentConfig, MetricsRecord, emit_loss_curves,
                      generate_dataset, load_idx, run_experiment)

__version__ = "0.1.0"

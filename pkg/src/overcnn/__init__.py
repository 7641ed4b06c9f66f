"""Over-parametrized average-pooling CNN image classifier trained by gradient
descent, with a synthetic-data generator for average-pooling targets, exact
gradient machinery with independent oracles, and Monte-Carlo excess-risk
evaluation."""

from .errors import (ConfigError, DimensionError, DomainError, EmptyDatasetError,
                     NonFiniteError, SingularityError, TopologyError)
from .model import (Dataset, Gradient, HyperParams, Image, Topology, WeightVector,
                    derive_theorem1_hyperparams, parameter_count, validate_topology)
from .network import (ActivationCache, classify, classify_batch, forward,
                      forward_batch, forward_subnetwork, logistic,
                      patch_response_oracle, truncate)
from .gradients import (empirical_risk, estimate_gradient_lipschitz, fd_gradient,
                        grad_penalized_risk, lipschitz_estimate, penalized_risk,
                        risk_and_grad)
from .synthdata import (AvgPoolDistribution, PatchFunctionSpec, bayes_classify,
                        bayes_risk_mc, eta, eta_batch, make_patch_spec,
                        read_dataset_file, sample_dataset, sample_images,
                        write_dataset_file)
from .training import (TrainTrace, audit_lemma2, gd_step, init_weights,
                       pl_inequality_check, train)
from .evaluation import (DeskRule, check_lemma1, default_desk_rule,
                         fit_loglog_slope, l2_risk_mc, misclassification_risk_mc,
                         network_classifier, rate_study)

__version__ = "0.1.0"

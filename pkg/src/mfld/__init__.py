"""Mean-field Langevin training, merging and pruning of two-layer networks."""
from .core import (LossKind, ParticleSystem, accuracy, empirical_risk, first_variation_grad,
                   first_variation_grads, loss_deriv, loss_eval, network_eval, neuron_eval,
                   neuron_outputs, objective)
from .datagen import (CirclesParams, Dataset, MultiIndexParams, dataset_read, dataset_write,
                      gen_circles, gen_multi_index, split)
from .ensemble import LoraAdapter, lora_merge, merge, prune_random
from .estimator import (MeanFieldClassifier, MeanFieldRegressor, NoisyLoraRegressor,
                        merge_estimators, merge_lora_estimators)
from .lora import LoraConfig, evaluate, finetune, gen_lowrank_task, lora_forward
from .optim import AdamWState, TrainConfig, init_system, mfld_step, noisy_adamw_step, train

__version__ = "0.1.0"

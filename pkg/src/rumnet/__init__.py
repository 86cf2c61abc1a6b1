"""Random-utility choice models built from feed-forward networks."""

from .data import (
    ChoiceDataset,
    ChoiceEvent,
    DatasetFormatError,
    load_long_csv,
    one_hot,
    save_long_csv,
)
from .net import DenseNetwork, GradientBuffer, NetworkSpec, init_network, max_node_l1
from .models import (
    ChoiceModel,
    DeepMNLModel,
    MNLModel,
    RumnetModel,
    TasteNetModel,
    VNNModel,
    build_model,
    masked_softmax,
    model_max_node_l1,
    standard_gumbel,
)
from .training import (
    Adam,
    EarlyStopper,
    FitReport,
    TrainConfig,
    TrainingDivergenceError,
    accuracy,
    aggregate,
    dataset_loss,
    evaluate,
    event_loss,
    fit,
    kfold,
    split_703015,
)
from .synthetic import (
    Setting1,
    Setting2,
    Setting3,
    draw_ground_truth,
    generate,
    ground_truth_loss,
    random_guess_loss,
    true_choice_probabilities,
)
from .theory import BoundInputs, compact_K, generalization_gap, pmin_bound
from .analysis import SweepSpec, kmeans, sweep, within_cluster_sse
from .serialize import load_model, load_network, save_model, save_network
from . import estimators

__version__ = "0.1.0"

"""Ground-truth generators for the controlled recovery experiments.

Each event offers kappa distinct products from a universe of P; a product's
feature vector is (x1, x2, one-hot universe index), with x1, x2 drawn fresh
per offered slot. Choices follow utility maximization with standard Gumbel
shocks. Events carry no customer features (d_z = 0).

Generation is reproducible and embarrassingly parallel: event t uses its own
generator derived from (seed, t).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ChoiceDataset, ChoiceEvent
from .models import masked_softmax, standard_gumbel


@dataclass
class Setting1:
    """Linear utility beta' x: plain MNL ground truth."""

    beta: np.ndarray  # (2 + P,)

    setting = 1
    x_range = (0.0, 1.0)

    @property
    def P(self) -> int:
        return self.beta.shape[0] - 2

    def class_utilities(self, X: np.ndarray) -> list[np.ndarray]:
        return [X @ self.beta]

    class_weights = (1.0,)


@dataclass
class Setting2:
    """Quadratic utility in (x1, x2) plus per-product fixed effects."""

    beta: np.ndarray   # (5,)
    gamma: np.ndarray  # (P,)

    setting = 2
    x_range = (0.0, 10.0)  # wider range accentuates the non-linearity

    @property
    def P(self) -> int:
        return self.gamma.shape[0]

    def class_utilities(self, X: np.ndarray) -> list[np.ndarray]:
        x1, x2 = X[..., 0], X[..., 1]
        b = self.beta
        u = (b[0] * x1 + b[1] * x2 + b[2] * x1 ** 2 + b[3] * x1 * x2
             + b[4] * x2 ** 2 + X[..., 2:] @ self.gamma)
        return [u]

    class_weights = (1.0,)


@dataclass
class Setting3:
    """Two opposed linear taste classes mixed 0.3/0.7: breaks IIA."""

    beta: np.ndarray   # (2 + P,)
    gamma: np.ndarray  # (2 + P,)
    p_class: float = 0.3

    setting = 3
    x_range = (0.0, 1.0)

    def __post_init__(self):
        if not 0.0 < self.p_class < 1.0:
            raise ValueError("p_class must be in (0, 1)")

    @property
    def P(self) -> int:
        return self.beta.shape[0] - 2

    def class_utilities(self, X: np.ndarray) -> list[np.ndarray]:
        return [X @ self.beta, X @ self.gamma]

    @property
    def class_weights(self):
        return (self.p_class, 1.0 - self.p_class)


GroundTruth = Setting1 | Setting2 | Setting3


def draw_ground_truth(setting: int, P: int, rng: np.random.Generator) -> GroundTruth:
    """Draw generator parameters: settings 1/2 uniform on [-1, 1]; setting 3
    uniform on [-100, 100] with the second class the exact opposite of the
    first (maximal taste disagreement)."""
    if P < 1:
        raise ValueError("P must be positive")
    if setting == 1:
        return Setting1(rng.uniform(-1.0, 1.0, size=2 + P))
    if setting == 2:
        return Setting2(rng.uniform(-1.0, 1.0, size=5), rng.uniform(-1.0, 1.0, size=P))
    if setting == 3:
        beta = rng.uniform(-100.0, 100.0, size=2 + P)
        return Setting3(beta, -beta)
    raise ValueError(f"unknown setting {setting}, expected 1, 2 or 3")


def generate(gt: GroundTruth, T: int, kappa: int, seed: int) -> ChoiceDataset:
    """Simulate T choice events of kappa distinct products each."""
    P = gt.P
    if kappa > P:
        raise ValueError(f"kappa={kappa} exceeds universe size P={P}")
    if T < 1:
        raise ValueError("T must be positive")
    lo, hi = gt.x_range
    events = []
    empty = np.zeros(0)
    avail = np.ones(kappa, dtype=bool)
    for t in range(T):
        rng = np.random.default_rng([seed, t])
        idx = rng.choice(P, size=kappa, replace=False)
        X = np.zeros((kappa, 2 + P))
        X[:, :2] = rng.uniform(lo, hi, size=(kappa, 2))
        X[np.arange(kappa), 2 + idx] = 1.0
        utilities = gt.class_utilities(X)
        if len(utilities) == 1:
            u = utilities[0]
        else:
            cls = int(rng.random() >= gt.class_weights[0])  # 0 w.p. p_class
            u = utilities[cls]
        chosen = int(np.argmax(u + standard_gumbel(rng, kappa)))
        events.append(ChoiceEvent(empty, X, avail.copy(), chosen))
    return ChoiceDataset(events, validate=False)


def true_choice_probabilities(gt: GroundTruth, event: ChoiceEvent) -> np.ndarray:
    """The generator's own closed-form choice distribution for one event."""
    if event.d_x != 2 + gt.P:
        raise ValueError(
            f"event feature dim {event.d_x} does not match universe "
            f"(expected {2 + gt.P})")
    p = np.zeros(event.n_alternatives)
    for w, u in zip(gt.class_weights, gt.class_utilities(event.products)):
        p += w * masked_softmax(u, event.available)
    return p


def ground_truth_loss(gt: GroundTruth, dataset: ChoiceDataset) -> float:
    """Mean -ln of the generator's closed-form probability of each choice."""
    total = 0.0
    for event in dataset:
        p = true_choice_probabilities(gt, event)
        total += -float(np.log(p[event.chosen]))
    return total / len(dataset)


def random_guess_loss(kappa: int) -> float:
    """Log-loss of the uniform predictor over kappa alternatives: ln(kappa)."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    return float(np.log(kappa))


def truth_manifest(gt: GroundTruth, seed: int, T: int, kappa: int) -> dict:
    """JSON-serializable sidecar describing a generated dataset."""
    out = {
        "setting": gt.setting,
        "P": gt.P,
        "T": T,
        "kappa": kappa,
        "seed": seed,
        "beta": [float(v) for v in gt.beta],
    }
    if isinstance(gt, (Setting2, Setting3)):
        out["gamma"] = [float(v) for v in gt.gamma]
    if isinstance(gt, Setting3):
        out["p_class"] = gt.p_class
    return out

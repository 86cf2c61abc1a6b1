"""Scikit-learn style estimators wrapping the choice models.

Each estimator owns its architecture and training hyperparameters, exposes
get_params/set_params/clone via BaseEstimator, and fits with the standard
recipe (minibatch Adam, early stopping, best-weight restoration). Datasets
are ChoiceDataset instances rather than feature matrices: a choice event is
a structured observation, not a flat row.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .data import ChoiceDataset
from .models import DEEPMNL, MNL as MNL_KIND, RUMNET, TASTENET, VNN as VNN_KIND, build_model
from .training import TrainConfig, evaluate, fit as fit_model


def check_dataset(dataset, min_events: int = 1) -> ChoiceDataset:
    """Validate estimator input: a ChoiceDataset or a list of ChoiceEvents."""
    if not isinstance(dataset, ChoiceDataset):
        dataset = ChoiceDataset(list(dataset))
    if len(dataset) < min_events:
        raise ValueError(f"need at least {min_events} events, got {len(dataset)}")
    return dataset


class ChoiceEstimator(BaseEstimator):
    """Shared fit/predict surface; subclasses fix the model kind."""

    _kind = None

    def __init__(self, depth=0, width=0, K=1, d_eps=4, d_nu=4, epochs=500,
                 batch_size=32, learning_rate=0.001, patience=50,
                 tolerance=0.0001, seed=0):
        self.depth = depth
        self.width = width
        self.K = K
        self.d_eps = d_eps
        self.d_nu = d_nu
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.tolerance = tolerance
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, patience=self.patience,
                           tolerance=self.tolerance, seed=self.seed)

    def build(self, d_x: int, d_z: int, n: int | None = None):
        rng = np.random.default_rng([self.seed, 0])
        return build_model(self._kind, d_x, d_z, rng, depth=self.depth,
                           width=self.width, K=self.K, d_eps=self.d_eps,
                           d_nu=self.d_nu, n=n)

    def fit(self, dataset, val=None, test=None):
        """Fit on `dataset`; when no validation set is given, 15% of the
        events (seeded) are held out of training to drive early stopping."""
        dataset = check_dataset(dataset, min_events=2)
        if val is None:
            n = len(dataset)
            n_val = max(1, int(0.15 * n))
            perm = np.random.default_rng([self.seed, 1]).permutation(n)
            val = dataset.subset(perm[:n_val])
            train = dataset.subset(perm[n_val:])
        else:
            train = dataset
            val = check_dataset(val)
        if test is not None:
            test = check_dataset(test)
        n = train.kappa_max if self._kind == VNN_KIND else None
        self.model_ = self.build(train.d_x, train.d_z, n=n)
        self.report_ = fit_model(self.model_, train, val, self._train_config(), test=test)
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit() first")

    def predict_proba(self, dataset) -> np.ndarray:
        """(T, max n) array of averaged choice probabilities; alternatives a
        shorter event does not have, and unavailable ones, get probability 0."""
        self._require_fitted()
        dataset = check_dataset(dataset)
        out = np.zeros((len(dataset), dataset.kappa_max))
        for i, event in enumerate(dataset):
            out[i, :event.n_alternatives] = self.model_.probabilities(event)
        return out

    def predict(self, dataset) -> np.ndarray:
        """Index of the most probable available alternative per event."""
        self._require_fitted()
        dataset = check_dataset(dataset)
        probs = self.predict_proba(dataset)
        pred = np.empty(len(dataset), dtype=np.intp)
        for i, event in enumerate(dataset):
            row = probs[i, :event.n_alternatives]
            pred[i] = int(np.argmax(np.where(event.available, row, -np.inf)))
        return pred

    def score(self, dataset, y=None) -> float:
        """Prediction accuracy (fraction of events whose argmax is the choice)."""
        self._require_fitted()
        return evaluate(self.model_, check_dataset(dataset), 0.0)[1]

    def loss(self, dataset) -> float:
        """Mean tolerance-renormalized negative log-likelihood."""
        self._require_fitted()
        return evaluate(self.model_, check_dataset(dataset), self.tolerance)[0]


class MNL(ChoiceEstimator):
    """Linear-utility multinomial logit."""

    _kind = MNL_KIND

    def __init__(self, epochs=500, batch_size=32, learning_rate=0.001,
                 patience=50, tolerance=0.0001, seed=0):
        super().__init__(depth=0, width=0, epochs=epochs, batch_size=batch_size,
                         learning_rate=learning_rate, patience=patience,
                         tolerance=tolerance, seed=seed)


class TasteNet(ChoiceEstimator):
    """MNL plus a learned customer-taste network."""

    _kind = TASTENET

    def __init__(self, depth=1, width=3, epochs=500, batch_size=32,
                 learning_rate=0.001, patience=50, tolerance=0.0001, seed=0):
        super().__init__(depth=depth, width=width, epochs=epochs,
                         batch_size=batch_size, learning_rate=learning_rate,
                         patience=patience, tolerance=tolerance, seed=seed)


class DeepMNL(ChoiceEstimator):
    """Feed-forward utility on x (+) z with Gumbel shocks."""

    _kind = DEEPMNL

    def __init__(self, depth=1, width=3, epochs=500, batch_size=32,
                 learning_rate=0.001, patience=50, tolerance=0.0001, seed=0):
        super().__init__(depth=depth, width=width, epochs=epochs,
                         batch_size=batch_size, learning_rate=learning_rate,
                         patience=patience, tolerance=tolerance, seed=seed)


class Rumnet(ChoiceEstimator):
    """Sample-average RUM approximation with K^2 latent sample pairs."""

    _kind = RUMNET


class VNN(ChoiceEstimator):
    """Vanilla network on concatenated product and customer attributes."""

    _kind = VNN_KIND

    def __init__(self, depth=1, width=3, epochs=500, batch_size=32,
                 learning_rate=0.001, patience=50, tolerance=0.0001, seed=0):
        super().__init__(depth=depth, width=width, epochs=epochs,
                         batch_size=batch_size, learning_rate=learning_rate,
                         patience=patience, tolerance=tolerance, seed=seed)

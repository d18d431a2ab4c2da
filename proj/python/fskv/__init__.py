"""Few-shot key-value extraction from visually rich documents.

The compiled core exchanges structured values as JSON text; the helpers here
accept and return plain dicts instead.
"""

import json

from . import _fskv
from ._fskv import Corpus, FskvError, Model, fit_roi, kl_std_normal, mean_window_iou, span_f1

__all__ = [
    "Corpus",
    "FskvError",
    "Model",
    "default_synthetic_config",
    "distance_curve",
    "evaluate",
    "fit_roi",
    "generate_synthetic",
    "grad_check",
    "kl_std_normal",
    "load_model",
    "mean_window_iou",
    "new_model",
    "sample_episodes",
    "similarity_heatmap",
    "span_f1",
    "split",
    "train",
]


def _dump(value):
    if value is None:
        return ""
    return value if isinstance(value, str) else json.dumps(value)


def default_synthetic_config(types=10, docs=300, seed=0):
    return json.loads(_fskv.default_synthetic_config(types, docs, seed))


def generate_synthetic(config=None, **overrides):
    """Builds a synthetic corpus; keyword overrides patch the default config."""
    if config is None:
        config = default_synthetic_config()
    config = dict(config, **overrides)
    return _fskv.generate_synthetic(json.dumps(config))


def split(corpus, mode="inter", train_fraction=0.6):
    """Returns (train, test) corpora."""
    return _fskv.split(corpus, mode, train_fraction)


def sample_episodes(corpus, n=4, k=1, k_prime=1, episodes=1, seed=0):
    """Returns a list of (episode dict, violation messages)."""
    return [(json.loads(e), v) for e, v in _fskv.sample_episodes(corpus, n, k, k_prime, episodes, seed)]


def new_model(config=None, seed=0):
    return Model(_dump(config), seed)


def load_model(path):
    return Model.load(str(path))


def train(corpus, config=None, log=None):
    """Returns (model, history) where history holds one loss dict per logged step."""
    model, history = _fskv.train(corpus, _dump(config), log)
    return model, [json.loads(h) for h in history]


def evaluate(model, corpus, n=4, k=1, k_prime=1, episodes=500, seed=0, decoder="prototype"):
    return json.loads(_fskv.evaluate(model, corpus, n, k, k_prime, episodes, seed, decoder))


def grad_check(config=None, seed=0, step=1e-4, tolerance=1e-3, coordinates=20):
    """Returns a list of (parameter name, max relative error, passed)."""
    return _fskv.grad_check(_dump(config), seed, step, tolerance, coordinates)


def similarity_heatmap(model, corpus, samples_per_type=100, seed=0):
    return json.loads(_fskv.similarity_heatmap(model, corpus, samples_per_type, seed))


def distance_curve(model, corpus, shots=(1, 2, 3, 4, 5), repetitions=200, seed=0):
    return json.loads(_fskv.distance_curve(model, corpus, list(shots), repetitions, seed))

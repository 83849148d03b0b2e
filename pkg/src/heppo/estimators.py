"""scikit-learn transformers for the reward/value datapath.

They treat every entry of ``X`` (1-D or 2-D) as one sample of a single
scalar stream, matching how rewards and values are standardized and
quantized, so they drop into a :class:`sklearn.pipeline.Pipeline`::

    codec = make_pipeline(BlockStandardizer(), UniformQuantizer(bits=8))
    codes = codec.fit_transform(values)
    restored = codec.inverse_transform(codes)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .quantization import QuantScheme, dequantize_array, quantize_array
from .standardization import (
    SIGMA_FLOOR,
    RunningStats,
    block_destandardize,
    block_standardize,
    block_stats,
    running_std,
    running_update_many,
)

__all__ = ["DynamicStandardizer", "BlockStandardizer", "UniformQuantizer"]


def _check(X, dtype="numeric"):
    return check_array(X, ensure_2d=False, dtype=dtype, ensure_all_finite=True)


class DynamicStandardizer(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Standardize against the running mean/std of everything seen so far.

    ``partial_fit`` folds a batch into the running statistics and never
    forgets; ``fit`` starts over. ``partial_fit_transform`` is the
    per-epoch operation: fold the batch in, then scale it.
    """

    def __init__(self, sigma_floor=SIGMA_FLOOR):
        self.sigma_floor = sigma_floor

    def partial_fit(self, X, y=None):
        X = _check(X, np.float64)
        self.stats_ = running_update_many(getattr(self, "stats_", RunningStats()), X.ravel())
        self.mean_ = self.stats_.mean
        self.scale_ = running_std(self.stats_) if self.stats_.n else 0.0
        self.n_samples_seen_ = self.stats_.n
        return self

    def fit(self, X, y=None):
        if hasattr(self, "stats_"):
            del self.stats_
        return self.partial_fit(X)

    def transform(self, X):
        check_is_fitted(self, "stats_")
        X = _check(X, np.float64)
        return (X - self.mean_) / max(self.scale_, self.sigma_floor)

    def partial_fit_transform(self, X):
        return self.partial_fit(X).transform(X)


class BlockStandardizer(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Standardize a block by its own population mean/std, and invert it."""

    def fit(self, X, y=None):
        X = _check(X, np.float64)
        self.stats_ = block_stats(X.ravel())
        self.mean_, self.scale_ = self.stats_.mu, self.stats_.sigma
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        X = _check(X, np.float64)
        return block_standardize(X.ravel(), self.stats_).reshape(X.shape)

    def inverse_transform(self, X):
        check_is_fitted(self, "stats_")
        X = _check(X, np.float64)
        return block_destandardize(X.ravel(), self.stats_).reshape(X.shape)


class UniformQuantizer(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """``bits``-wide floor quantizer on ``[-range_, range_)``; stateless."""

    def __init__(self, bits=8, range_=4.0):
        self.bits = bits
        self.range_ = range_

    def fit(self, X=None, y=None):
        self.scheme_ = QuantScheme(self.bits, self.range_)
        return self

    def transform(self, X):
        check_is_fitted(self, "scheme_")
        X = _check(X, np.float64)
        return quantize_array(X.ravel(), self.scheme_).reshape(X.shape)

    def inverse_transform(self, X):
        check_is_fitted(self, "scheme_")
        X = _check(X, None)
        return dequantize_array(X.ravel(), self.scheme_).reshape(X.shape)

    def __sklearn_is_fitted__(self):
        return hasattr(self, "scheme_")

"""Scikit-learn style front end over the density map pipeline.

``FixationDensityMapper`` is a transformer whose samples are gaze
fixations: ``fit`` builds the surface sampling layout for the configured
scene and accumulates the fitted fixations into a normalized density map;
``transform`` maps any fixation list to the per-sample value vector it
induces under the fitted layout.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .density import GenerationConfig, generate, normalize
from .gaze import DEFAULT_THETA, Fixation
from .geometry import Scene, build_sampled_meshes
from .raster import DEFAULT_EPS_ABS, DEFAULT_EPS_REL, DEFAULT_RESOLUTION

__all__ = ["FixationDensityMapper"]


class FixationDensityMapper(BaseEstimator, TransformerMixin):
    """Estimate a surface fixation density field over a 3D scene.

    Parameters mirror GenerationConfig; ``scene`` is the Scene the field
    lives on. After ``fit(fixations)`` the fitted map is available as
    ``density_map_`` (normalized) and ``sampled_meshes_`` describes the
    per-triangle sample layout.
    """

    def __init__(
        self,
        scene: Scene = None,
        k: float = 40000.0,
        theta: float = DEFAULT_THETA,
        zbuffer_resolution: int = DEFAULT_RESOLUTION,
        epsilon_abs: float = DEFAULT_EPS_ABS,
        epsilon_rel: float = DEFAULT_EPS_REL,
        filtering_enabled: bool = True,
        objects: set | None = None,
        workers: int | None = None,
    ):
        self.scene = scene
        self.k = k
        self.theta = theta
        self.zbuffer_resolution = zbuffer_resolution
        self.epsilon_abs = epsilon_abs
        self.epsilon_rel = epsilon_rel
        self.filtering_enabled = filtering_enabled
        self.objects = objects
        self.workers = workers

    def _config(self) -> GenerationConfig:
        return GenerationConfig(
            k=self.k,
            theta=self.theta,
            zbuffer_resolution=self.zbuffer_resolution,
            epsilon_abs=self.epsilon_abs,
            epsilon_rel=self.epsilon_rel,
            filtering_enabled=self.filtering_enabled,
            object_include_list=self.objects,
        ).validate()

    def fit(self, X: list[Fixation], y=None):
        """Build the sampling layout and accumulate the given fixations."""
        if self.scene is None:
            raise ValueError("FixationDensityMapper requires a scene")
        config = self._config()
        self.sampled_meshes_ = build_sampled_meshes(self.scene, self.k)
        raw = generate(self.scene, self.sampled_meshes_, list(X), config, workers=self.workers)
        self.density_map_ = normalize(raw)
        self.n_samples_out_ = self.density_map_.total_samples
        return self

    def transform(self, X: list[Fixation]) -> np.ndarray:
        """Normalized per-sample values induced by the given fixations.

        Returns a 1D vector over the fitted sample layout, concatenated in
        scene object order.
        """
        check_is_fitted(self, "sampled_meshes_")
        raw = generate(self.scene, self.sampled_meshes_, list(X), self._config(), workers=self.workers)
        dmap = normalize(raw)
        return np.concatenate([dmap.values[oid] for oid in self.scene.object_ids])

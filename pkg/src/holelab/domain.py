"""Bounded star-shaped sampling domains."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DomainDescriptor:
    """Axis-aligned cube of given half-width, or the unit ball.

    Both are bounded and star-shaped with respect to the origin.
    """

    shape: str = "axis_cube"       # "axis_cube" | "unit_ball"
    half_width: float = 1.0        # cube only; the ball has radius 1

    def __post_init__(self):
        if self.shape not in ("axis_cube", "unit_ball"):
            raise ValueError(f"unknown domain shape {self.shape!r}")
        if self.shape == "axis_cube" and self.half_width <= 0:
            raise ValueError("cube half-width must be positive")

    @property
    def radius(self) -> float:
        return self.half_width if self.shape == "axis_cube" else 1.0

    def volume(self, d: int) -> float:
        if self.shape == "axis_cube":
            return (2.0 * self.half_width) ** d
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership of physical points (closed set); x is (n, d) or (d,)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.shape == "axis_cube":
            return np.max(np.abs(x), axis=1) <= self.half_width
        return np.einsum("ij,ij->i", x, x) <= 1.0

    def bounding_box(self, d: int):
        r = self.radius
        return -r * np.ones(d), r * np.ones(d)

    def inner_margin(self, lo: np.ndarray, hi: np.ndarray, margin: float) -> bool:
        """True if the box [lo, hi] lies in the domain at distance >= margin."""
        if self.shape == "axis_cube":
            return bool(np.max(np.maximum(np.abs(lo), np.abs(hi))) <= self.half_width - margin)
        corner = np.maximum(np.abs(lo), np.abs(hi))
        return bool(np.sqrt(np.sum(corner ** 2)) <= 1.0 - margin)

    def box_intersects(self, lo: np.ndarray, hi: np.ndarray) -> bool:
        """True if the open box (lo, hi) meets the domain in positive measure."""
        if self.shape == "axis_cube":
            return bool(np.all(lo < self.half_width) and np.all(hi > -self.half_width))
        nearest = np.clip(0.0, lo, hi)      # box point closest to the origin
        return bool(np.sum(nearest ** 2) < 1.0)

    def to_json(self) -> dict:
        out = {"shape": self.shape}
        if self.shape == "axis_cube":
            out["half_width"] = self.half_width
        return out

    @staticmethod
    def from_json(obj: dict) -> "DomainDescriptor":
        if obj["shape"] == "axis_cube":
            return DomainDescriptor("axis_cube", obj.get("half_width", 1.0))
        return DomainDescriptor("unit_ball")

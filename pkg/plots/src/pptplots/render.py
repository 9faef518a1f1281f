"""Figure rendering from the producer's CSV files.

Four figure kinds mirror the analysis outputs: marginal density curves
(posterior band or prior-path overlays), joint-density heat maps with
optional conditional-mean overlays, moment boxplots, and coefficient
dispersion diagrams.  Heat maps put the periodic angle on the x axis
and the colatitude on the y axis; density uses a monotone single-hue
ramp with darker meaning denser.  Rendering is deterministic: the same
inputs produce the same PNG bytes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from pptplots.tables import SchemaError, Table, read_table

__all__ = ["FigureRequest", "render"]

FIGURE_KINDS = ("marginal", "joint-heatmap", "moment-boxplot", "gamma-dispersion")

_PNG_OPTS = {"dpi": 150, "metadata": {"Software": None}}


@dataclass
class FigureRequest:
    """What to draw: input files, figure kind, options, output path."""

    kind: str
    inputs: list[str]
    output: str
    curves: list[str] = field(default_factory=list)
    rotate: bool = False
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None
    title: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")
        if not self.inputs:
            raise ValueError("at least one input file is required")
        for path in list(self.inputs) + list(self.curves):
            if not os.path.exists(path):
                raise FileNotFoundError(path)


def _rotate_axis(theta: np.ndarray, values: np.ndarray, axis: int):
    """Remap a periodic axis from [0, 2*pi) to [-pi, pi) and resort."""
    shifted = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    order = np.argsort(shifted)
    return shifted[order], np.take(values, order, axis=axis)


def _rotate_points(theta: np.ndarray) -> np.ndarray:
    return np.mod(theta + np.pi, 2 * np.pi) - np.pi


def render(request: FigureRequest) -> str:
    """Draw the requested figure; returns the output path."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    try:
        if request.kind == "marginal":
            _draw_marginal(ax, request)
        elif request.kind == "joint-heatmap":
            _draw_joint(ax, fig, request)
        elif request.kind == "moment-boxplot":
            _draw_boxplot(ax, request)
        else:
            _draw_dispersion(ax, request)
        if request.xlim is not None:
            ax.set_xlim(*request.xlim)
        if request.ylim is not None:
            ax.set_ylim(*request.ylim)
        if request.title:
            ax.set_title(request.title)
        fig.savefig(request.output, **_PNG_OPTS)
    finally:
        plt.close(fig)
    return request.output


def _draw_marginal(ax, request: FigureRequest) -> None:
    table = read_table(request.inputs[0])
    if "mean" in table:
        table.require("theta", "mean", "lower", "upper")
        theta, mean = table["theta"], table["mean"]
        lower, upper = table["lower"], table["upper"]
        if request.rotate:
            theta, stacked = _rotate_axis(theta, np.vstack([mean, lower, upper]), axis=1)
            mean, lower, upper = stacked
        ax.fill_between(theta, lower, upper, color="0.8", label="95% band")
        ax.plot(theta, mean, color="0.1", lw=1.5, label="posterior mean")
        ax.legend(frameon=False)
    elif "path" in table:
        table.require("path", "theta", "density")
        for p in np.unique(table["path"]):
            mask = table["path"] == p
            theta = table["theta"][mask]
            dens = table["density"][mask]
            if request.rotate:
                theta, dens = _rotate_axis(theta, dens, axis=0)
            ax.plot(theta, dens, color="0.2", lw=0.7, alpha=0.6)
    else:
        raise SchemaError(
            f"marginal figure needs (theta,mean,lower,upper) or (path,theta,density); "
            f"file has {table.names}"
        )
    ax.set_xlabel("angle (rad)")
    ax.set_ylabel("density")
    if ax.get_ylim()[0] > 0:
        ax.set_ylim(bottom=0.0)


def _grid_from_table(table: Table):
    table.require("theta_1", "theta_2", "density")
    t1 = np.unique(table["theta_1"])
    t2 = np.unique(table["theta_2"])
    if t1.size * t2.size != table.n_rows:
        raise SchemaError("grid file is not a full rectangular grid")
    # rows are written in row-major theta_1-major order
    values = table["density"].reshape(t1.size, t2.size)
    return t1, t2, values


def _draw_joint(ax, fig, request: FigureRequest) -> None:
    t1, t2, values = _grid_from_table(read_table(request.inputs[0]))
    if request.rotate:
        t2, values = _rotate_axis(t2, values, axis=1)
    # x = periodic angle theta_2, y = colatitude theta_1
    mesh = ax.pcolormesh(t2, t1, values, cmap="Greys", shading="nearest")
    fig.colorbar(mesh, ax=ax, label="density")
    styles = ("--", ":")
    for style, path in zip(styles, request.curves[:2]):
        curve = read_table(path)
        curve.require("conditioning", "mean", "defined")
        ok = curve["defined"] > 0
        cond = curve["conditioning"][ok]
        mean = curve["mean"][ok]
        # a curve over theta_2 predicts theta_1 (and vice versa); decide
        # by which axis the conditioning values span
        if cond.size and cond.max() > np.pi + 1e-9:
            x, y = cond, mean
            if request.rotate:
                x = _rotate_points(x)
                order = np.argsort(x)
                x, y = x[order], y[order]
        else:
            x, y = mean, cond
            if request.rotate:
                x = _rotate_points(x)
        ax.plot(x, y, style, color="black", lw=1.2)
    ax.set_xlabel("theta_2 (rad)")
    ax.set_ylabel("theta_1 (rad)")


def _draw_boxplot(ax, request: FigureRequest) -> None:
    table = read_table(request.inputs[0])
    names = [n for n in table.names if n not in ("iteration", "path")]
    if not names:
        raise SchemaError(f"moment file has no moment columns: {table.names}")
    data = [table[n] for n in names]
    ax.boxplot(data, tick_labels=names)
    ax.axhline(0.0, color="0.7", lw=0.6)
    ax.set_ylabel("posterior sample")


def _draw_dispersion(ax, request: FigureRequest) -> None:
    table = read_table(request.inputs[0])
    gamma_cols = table.matching(r"gamma_\d+_\d+")
    if not gamma_cols:
        raise SchemaError(f"dispersion figure needs gamma_l_h columns; file has {table.names}")
    by_group: dict[str, list[str]] = {}
    for name in gamma_cols:
        _, l, h = name.split("_")
        by_group.setdefault(h, []).append(name)
    shades = ("0.65", "0.15", "0.4", "0.0")
    markers = ("o", "s", "^", "D")
    for idx, (h, names) in enumerate(sorted(by_group.items())):
        names = sorted(names, key=lambda n: int(n.split("_")[1]))
        first = table[names[0]]
        for j, other in enumerate(names[1:]):
            ax.scatter(
                first,
                table[other],
                s=6,
                color=shades[idx % len(shades)],
                marker=markers[j % len(markers)],
                label=f"{names[0]} vs {other}",
            )
    ax.set_xlabel("first-row coefficient")
    ax.set_ylabel("other coefficients")
    ax.legend(frameon=False, fontsize=7)

import json

import numpy as np
import pytest
from PIL import Image

from pptplots.cli import main
from pptplots.render import FigureRequest, render
from pptplots.tables import SchemaError


def write_table(path, columns):
    names = list(columns)
    n = len(columns[names[0]])
    lines = [",".join(names)]
    for i in range(n):
        cells = []
        for name in names:
            v = columns[name][i]
            cells.append(str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v)))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def midpoints(length, n):
    return (length / n) * (np.arange(n) + 0.5)


def uniform_sphere_grid(tmp_path, resolution=40):
    """f(theta1, theta2) = sin(theta1)/(4*pi): constant along theta2."""
    t1 = midpoints(np.pi, resolution)
    t2 = midpoints(2 * np.pi, resolution)
    tt1 = np.repeat(t1, resolution)
    tt2 = np.tile(t2, resolution)
    density = np.sin(tt1) / (4 * np.pi)
    return write_table(
        tmp_path / "uniform.csv", {"theta_1": tt1, "theta_2": tt2, "density": density}
    )


def moments_file(tmp_path, n_rows=30, seed=0):
    rng = np.random.default_rng(seed)
    return write_table(
        tmp_path / "moments.csv",
        {
            "iteration": list(range(n_rows)),
            "nu_1": rng.uniform(0, np.pi, n_rows),
            "conc_1": rng.uniform(0, 1, n_rows),
            "nu_2": rng.uniform(0, 2 * np.pi, n_rows),
            "conc_2": rng.uniform(0, 1, n_rows),
            "rho": rng.uniform(-0.4, 0.4, n_rows),
        },
    )


class TestJointHeatmap:
    def test_uniform_sphere_rows_constant(self, tmp_path):
        # theta_2 spans the x axis, so constancy along theta_2 means
        # near-zero pixel variance along image rows inside the axes
        grid = uniform_sphere_grid(tmp_path)
        out = str(tmp_path / "joint.png")
        render(FigureRequest(kind="joint-heatmap", inputs=[grid], output=out))
        img = np.asarray(Image.open(out).convert("L"), dtype=float)
        h, w = img.shape
        crop = img[int(0.35 * h) : int(0.65 * h), int(0.30 * w) : int(0.55 * w)]
        row_var = crop.var(axis=1)
        assert row_var.mean() < 2.0
        # discriminating control: the transposed field varies along rows
        t1 = midpoints(np.pi, 40)
        t2 = midpoints(2 * np.pi, 40)
        control = write_table(
            tmp_path / "control.csv",
            {
                "theta_1": np.repeat(t1, 40),
                "theta_2": np.tile(t2, 40),
                "density": np.abs(np.sin(np.tile(t2, 40))) / 4.0,
            },
        )
        out2 = str(tmp_path / "control.png")
        render(FigureRequest(kind="joint-heatmap", inputs=[control], output=out2))
        img2 = np.asarray(Image.open(out2).convert("L"), dtype=float)
        crop2 = img2[int(0.35 * h) : int(0.65 * h), int(0.30 * w) : int(0.55 * w)]
        assert crop2.var(axis=1).mean() > 10 * row_var.mean()

    def test_curve_overlays_render(self, tmp_path):
        grid = uniform_sphere_grid(tmp_path)
        n = 40
        curve1 = write_table(
            tmp_path / "c1.csv",
            {
                "conditioning": midpoints(2 * np.pi, n),
                "mean": np.full(n, np.pi / 2),
                "concentration": np.full(n, 0.5),
                "defined": [1] * n,
            },
        )
        curve2 = write_table(
            tmp_path / "c2.csv",
            {
                "conditioning": midpoints(np.pi, n),
                "mean": np.full(n, np.pi),
                "concentration": np.full(n, 0.5),
                "defined": [1] * (n - 5) + [0] * 5,
            },
        )
        out = str(tmp_path / "joint_curves.png")
        render(
            FigureRequest(
                kind="joint-heatmap", inputs=[grid], curves=[curve1, curve2], output=out
            )
        )
        assert Image.open(out).size[0] > 0

    def test_rotation_option(self, tmp_path):
        grid = uniform_sphere_grid(tmp_path)
        out = str(tmp_path / "rotated.png")
        render(FigureRequest(kind="joint-heatmap", inputs=[grid], output=out, rotate=True))
        assert Image.open(out).size[0] > 0

    def test_crop_option(self, tmp_path):
        grid = uniform_sphere_grid(tmp_path)
        out = str(tmp_path / "crop.png")
        render(
            FigureRequest(
                kind="joint-heatmap",
                inputs=[grid],
                output=out,
                xlim=(1.0, 2.0),
                ylim=(0.5, 1.5),
            )
        )
        assert Image.open(out).size[0] > 0

    def test_non_rectangular_grid_rejected(self, tmp_path):
        bad = write_table(
            tmp_path / "bad.csv",
            {"theta_1": [0.1, 0.2, 0.2], "theta_2": [0.1, 0.1, 0.2], "density": [1.0, 1.0, 1.0]},
        )
        with pytest.raises(SchemaError):
            render(
                FigureRequest(
                    kind="joint-heatmap", inputs=[bad], output=str(tmp_path / "x.png")
                )
            )


class TestMarginal:
    def test_band_flavor(self, tmp_path):
        n = 60
        theta = midpoints(2 * np.pi, n)
        mean = (1 + 0.3 * np.cos(theta)) / (2 * np.pi)
        path = write_table(
            tmp_path / "marg.csv",
            {"theta": theta, "mean": mean, "lower": mean * 0.8, "upper": mean * 1.2},
        )
        out = str(tmp_path / "marg.png")
        render(FigureRequest(kind="marginal", inputs=[path], output=out))
        assert Image.open(out).size[0] > 0

    def test_path_overlay_flavor(self, tmp_path):
        n = 30
        theta = midpoints(2 * np.pi, n)
        rng = np.random.default_rng(2)
        cols = {
            "path": np.repeat(np.arange(4), n),
            "theta": np.tile(theta, 4),
            "density": np.abs(rng.normal(0.16, 0.03, 4 * n)),
        }
        path = write_table(tmp_path / "paths.csv", cols)
        out = str(tmp_path / "paths.png")
        render(FigureRequest(kind="marginal", inputs=[path], output=out))
        assert Image.open(out).size[0] > 0

    def test_wrong_schema_names_columns(self, tmp_path):
        path = write_table(tmp_path / "odd.csv", {"x": [1.0], "y": [2.0]})
        with pytest.raises(SchemaError, match="marginal"):
            render(FigureRequest(kind="marginal", inputs=[path], output=str(tmp_path / "o.png")))


class TestBoxplotAndDispersion:
    def test_boxplot_renders(self, tmp_path):
        out = str(tmp_path / "box.png")
        render(FigureRequest(kind="moment-boxplot", inputs=[moments_file(tmp_path)], output=out))
        assert Image.open(out).size[0] > 0

    def test_single_iteration_degenerate_boxes(self, tmp_path):
        out = str(tmp_path / "box1.png")
        render(
            FigureRequest(
                kind="moment-boxplot",
                inputs=[moments_file(tmp_path, n_rows=1, seed=3)],
                output=out,
            )
        )
        assert Image.open(out).size[0] > 0

    def test_dispersion_renders(self, tmp_path):
        rng = np.random.default_rng(4)
        n = 50
        cols = {"iteration": list(range(n))}
        for l in (1, 2, 3):
            for h in (1, 2):
                cols[f"gamma_{l}_{h}"] = rng.normal(l - 2 * h, 0.2, n)
        path = write_table(tmp_path / "gamma.csv", cols)
        out = str(tmp_path / "disp.png")
        render(FigureRequest(kind="gamma-dispersion", inputs=[path], output=out))
        assert Image.open(out).size[0] > 0

    def test_dispersion_needs_gamma_columns(self, tmp_path):
        path = write_table(tmp_path / "nog.csv", {"iteration": [1], "alpha": [0.5]})
        with pytest.raises(SchemaError, match="gamma"):
            render(
                FigureRequest(
                    kind="gamma-dispersion", inputs=[path], output=str(tmp_path / "n.png")
                )
            )


class TestDeterminismAndRotation:
    def test_identical_inputs_identical_bytes(self, tmp_path):
        grid = uniform_sphere_grid(tmp_path)
        out1, out2 = str(tmp_path / "a.png"), str(tmp_path / "b.png")
        render(FigureRequest(kind="joint-heatmap", inputs=[grid], output=out1))
        render(FigureRequest(kind="joint-heatmap", inputs=[grid], output=out2))
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_rotation_maps_mode(self):
        from pptplots.render import _rotate_points

        assert _rotate_points(np.array([5.5]))[0] == pytest.approx(5.5 - 2 * np.pi)
        assert abs(_rotate_points(np.array([5.5]))[0] - (-0.78)) < 0.01


class TestCli:
    def test_flags_mode(self, tmp_path, capsys):
        grid = uniform_sphere_grid(tmp_path)
        out = str(tmp_path / "cli.png")
        rc = main(["--figure", "joint-heatmap", "--input", grid, "--output", out])
        assert rc == 0
        assert Image.open(out).size[0] > 0

    def test_request_json_mode(self, tmp_path):
        grid = uniform_sphere_grid(tmp_path)
        req = {"kind": "joint-heatmap", "inputs": [grid], "output": str(tmp_path / "r.png")}
        req_path = tmp_path / "req.json"
        req_path.write_text(json.dumps(req), encoding="utf-8")
        assert main(["--request", str(req_path)]) == 0

    def test_check_mode_byte_exact(self, tmp_path, capsys):
        path = moments_file(tmp_path)
        assert main(["--check", path]) == 0
        emitted = capsys.readouterr().out
        assert emitted.encode() == open(path, "rb").read()

    def test_schema_error_exit_code(self, tmp_path):
        bad = write_table(tmp_path / "bad.csv", {"x": [1.0]})
        rc = main(
            ["--figure", "gamma-dispersion", "--input", bad, "--output", str(tmp_path / "x.png")]
        )
        assert rc == 2

    def test_missing_input_rejected(self, tmp_path):
        rc = main(
            [
                "--figure", "marginal",
                "--input", str(tmp_path / "nope.csv"),
                "--output", str(tmp_path / "x.png"),
            ]
        )
        assert rc == 2

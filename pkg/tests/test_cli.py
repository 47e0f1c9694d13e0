import math

import numpy as np
import pytest

from patchflow import cli
from patchflow.cli import main, parse_config
from patchflow.errors import ConfigError
from patchflow.geometry import make_ellipse_contour, write_contour_csv


def write_config(tmp_path, name="run.toml", **kv):
    lines = []
    for key, value in kv.items():
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        elif isinstance(value, bool):
            lines.append(f"{key} = {str(value).lower()}")
        elif isinstance(value, list):
            lines.append(f"{key} = {value}")
        else:
            lines.append(f"{key} = {value}")
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


class TestParseConfig:
    def test_defaults_applied(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, kernel="cauchy"))
        assert cfg["dt"] == 1e-3
        assert cfg["n_markers"] == 512
        assert cfg["integrator"] == "rk4"

    def test_unknown_key_named(self, tmp_path):
        with pytest.raises(ConfigError, match="kernle"):
            parse_config(write_config(tmp_path, kernle="cauchy"))

    def test_linear_map_requires_matrix(self, tmp_path):
        with pytest.raises(ConfigError, match="L"):
            parse_config(write_config(tmp_path, kernel="linear-map"))
        cfg = parse_config(
            write_config(tmp_path, name="lm.toml", kernel="linear-map", L=[[1.0, 0.0], [0.0, -1.0]])
        )
        assert cfg["kernel"] == "linear-map"

    def test_unknown_kernel_lists_valid(self, tmp_path):
        with pytest.raises(ConfigError, match="cauchy"):
            parse_config(write_config(tmp_path, kernel="stokeslet"))

    def test_type_mismatch(self, tmp_path):
        with pytest.raises(ConfigError, match="dt"):
            parse_config(write_config(tmp_path, dt="fast"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.toml")

    def test_missing_contour_file(self, tmp_path):
        with pytest.raises(ConfigError, match="contour"):
            parse_config(write_config(tmp_path, contour_file="ghost.csv"))


class TestSimulate:
    def test_writes_diagnostics_with_schema(self, tmp_path):
        cfg = write_config(tmp_path, a0=2.0, b0=1.0, t_end=0.02, n_markers=64, diagnostics_every=10)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "diagnostics.csv").read_text().splitlines()
        assert lines[0] == "t,area,perimeter,cx,cy,a_fit,b_fit,theta_fit,sum_ab,skew_inv,holder_normal"
        assert len(lines) >= 3

    def test_deterministic_output(self, tmp_path):
        cfg = write_config(tmp_path, a0=2.0, b0=1.0, t_end=0.02, n_markers=64, diagnostics_every=5)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        main(["simulate", "--config", str(cfg), "--out", str(out1)])
        main(["simulate", "--config", str(cfg), "--out", str(out2)])
        assert (out1 / "diagnostics.csv").read_bytes() == (out2 / "diagnostics.csv").read_bytes()

    def test_frames_svg_single_closed_path(self, tmp_path):
        cfg = write_config(
            tmp_path, a0=1.0, b0=1.0, t_end=0.02, n_markers=64,
            diagnostics_every=10, emit_frames=True, frame_every=1,
        )
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        svgs = sorted(out.glob("frame_*.svg"))
        assert svgs and svgs[0].name == "frame_0000.svg"
        body = svgs[0].read_text()
        assert body.count("<path") == 1
        assert 'viewBox="' in body and body.strip().endswith("</svg>")
        first_vb = body.split('viewBox="')[1].split('"')[0]
        assert all(s.split('viewBox="')[1].split('"')[0] == first_vb for s in
                   (p.read_text() for p in svgs))
        assert sorted(out.glob("frame_*.csv"))

    def test_contour_file_input(self, tmp_path):
        src = tmp_path / "shape.csv"
        write_contour_csv(make_ellipse_contour(1.5, 1.0, 0.2, 64), src)
        cfg = write_config(tmp_path, contour_file="shape.csv", t_end=0.01, n_markers=64)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0

    def test_breakdown_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, a0=3.0, b0=0.2, dt=1.5, t_end=4.5, n_markers=64)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3

    def test_config_error_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, kernel="stokeslet")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


class TestFlagOverrides:
    def test_simulate_kernel_override(self, tmp_path):
        cfg = write_config(tmp_path, a0=2.0, b0=1.0, t_end=0.02, n_markers=64, diagnostics_every=10)
        out_c, out_e = tmp_path / "c", tmp_path / "e"
        assert main(["simulate", "--config", str(cfg), "--out", str(out_c)]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(out_e), "--kernel", "euler"]) == 0
        # the vorticity kernel keeps the axes; the default collapses them
        a_c = float((out_c / "diagnostics.csv").read_text().splitlines()[-1].split(",")[5])
        a_e = float((out_e / "diagnostics.csv").read_text().splitlines()[-1].split(",")[5])
        assert abs(a_e - 2.0) < 1e-6 and a_c > 2.01
        assert main(["simulate", "--config", str(cfg), "--out", str(out_e), "--kernel", "bogus"]) == 2

    def test_ellipse_ode_without_config(self, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["ellipse-ode", "--a0", "2.0", "--b0", "1.0", "--theta0", "0.0",
             "--t-end", "0.5", "--dt", "1e-4", "--out", str(out)]
        )
        assert code == 0
        last = (out / "ellipse_ode.csv").read_text().splitlines()[-1].split(",")
        assert float(last[1]) == pytest.approx(2.5339127895091090, abs=1e-9)


class TestEllipseOde:
    def test_limit_angle_row(self, tmp_path):
        cfg = write_config(
            tmp_path, a0=2.0, b0=1.0, theta0=0.5235987755982988, t_end=20.0, dt=1e-3
        )
        out = tmp_path / "out"
        assert main(["ellipse-ode", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "ellipse_ode.csv").read_text().splitlines()
        assert lines[0] == "t,a,b,theta,sum_ab,skew_inv"
        last = [float(v) for v in lines[-1].split(",")]
        assert last[0] == 20.0
        assert math.sin(2.0 * last[3]) == pytest.approx(0.288675, abs=1e-6)
        assert last[2] < 1e-3
        assert last[4] == pytest.approx(3.0, abs=1e-10)


class TestCompare:
    def test_pi_over_six_reproduction(self, tmp_path):
        # theta0 = 0.5236 reproduces the tilted acceptance setup end to end
        cfg = write_config(
            tmp_path, a0=2.0, b0=1.0, theta0=0.5236, t_end=0.2,
            n_markers=256, diagnostics_every=40, tolerance=1e-3,
        )
        out = tmp_path / "out"
        assert main(["compare", "--config", str(cfg), "--out", str(out), "--assert"]) == 0
        lines = (out / "compare.csv").read_text().splitlines()
        assert lines[0].startswith("t,a_sim,b_sim,theta_sim,a_ref,b_ref,theta_ref")
        errs = np.array([[float(v) for v in ln.split(",")[-3:]] for ln in lines[1:]])
        assert errs.max() <= 1e-3

    def test_assert_failure_exit_code(self, tmp_path):
        cfg = write_config(
            tmp_path, a0=2.0, b0=1.0, t_end=0.05, n_markers=64,
            diagnostics_every=10, tolerance=1e-30,
        )
        assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o"), "--assert"]) == 4


class TestFieldGrid:
    def test_grid_schema_and_values(self, tmp_path):
        cfg = write_config(tmp_path, a0=2.0, b0=1.0, n_markers=128, box=[-3.0, 3.0, -3.0, 3.0], grid_n=5)
        out = tmp_path / "out"
        assert main(["field", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "field.csv").read_text().splitlines()
        assert lines[0] == "x,y,vx,vy,div"
        assert len(lines) == 1 + 25
        from patchflow.field import boundary_velocity
        from patchflow.kernels import cauchy
        row = [float(v) for v in lines[1].split(",")]
        v = boundary_velocity(make_ellipse_contour(2.0, 1.0, 0.0, 128), cauchy(),
                              np.array(row[:2]))
        assert np.allclose(row[2:4], v, atol=1e-12)


class TestShippedConfigs:
    def test_every_criterion_has_a_parsable_config(self):
        from pathlib import Path

        cfg_dir = Path(__file__).resolve().parents[1] / "configs"
        found = sorted(cfg_dir.glob("criterion_*.toml"))
        assert len(found) == 11
        nums = sorted(int(p.name.split("_")[1]) for p in found)
        assert nums == list(range(1, 12))
        for path in found:
            parse_config(path)

    def test_config_two_matches_tilted_benchmark(self):
        from pathlib import Path

        cfg = parse_config(
            Path(__file__).resolve().parents[1] / "configs" / "criterion_02_tilted.toml"
        )
        assert cfg["kernel"] == "cauchy"
        assert cfg["theta0"] == pytest.approx(math.pi / 6.0)
        assert cfg["dt"] == 1e-3 and cfg["t_end"] == 1.0 and cfg["n_markers"] == 512

    def test_config_one_runs_clean_through_cli(self, tmp_path):
        # the shipped axis-aligned benchmark passes its own --assert gate
        from pathlib import Path

        cfg = Path(__file__).resolve().parents[1] / "configs" / "criterion_01_axis_aligned.toml"
        assert main(["compare", "--config", str(cfg), "--out", str(tmp_path), "--assert"]) == 0
        lines = (tmp_path / "compare.csv").read_text().splitlines()
        errs = np.array([[float(v) for v in ln.split(",")[-3:]] for ln in lines[1:]])
        assert errs.max() <= 1e-3


class TestAnalysisSubcommands:
    def test_vasin_csv(self, tmp_path):
        cfg = write_config(
            tmp_path, bump_gamma=0.5, bump_eps=0.1, gamma=0.5,
            d_min=1e-2, d_max=1e-1, n_distances=3, n_markers=1024,
        )
        out = tmp_path / "out"
        assert main(["vasin", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "vasin.csv").read_text().splitlines()
        assert lines[0] == "d,m,product"
        assert len(lines) == 4

    def test_pv_csv_both_modes(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, name="b.toml", a0=2.0, b0=1.0, n_markers=1024, pv_mode="boundary")
        assert main(["pv", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "pv.csv").read_text().splitlines()
        assert lines[0] == "epsilon,value"
        assert len(lines) > 3
        cfg = write_config(tmp_path, name="s.toml", a0=2.0, b0=1.0, n_markers=1024,
                           pv_mode="solid", marker_index=128)
        assert main(["pv", "--config", str(cfg), "--out", str(out)]) == 0

    def test_commutator_csv(self, tmp_path):
        cfg = write_config(tmp_path, a0=2.0, b0=1.0, n_markers=128,
                           test_field="quadratic", marker_indices=[0, 32])
        out = tmp_path / "out"
        assert main(["commutator", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "commutator.csv").read_text().splitlines()
        assert lines[0] == "point,DS,DB,abs_diff,tol"
        assert len(lines) == 3
        for ln in lines[1:]:
            vals = [float(v) for v in ln.split(",")]
            assert vals[3] <= 3.0 * vals[4]

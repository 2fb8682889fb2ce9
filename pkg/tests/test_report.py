import numpy as np

from covert_kalman.harness import AggregateMSE
from covert_kalman.report import save_comparison_figure, save_mse_figure

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def fake_aggregate(T=25):
    k = np.arange(1, T + 1, dtype=float)
    return AggregateMSE(
        user_mse=0.5 + 0.01 * k,
        eav_mse=0.5 + 0.2 * k,
        eav_theory=0.5 + 0.19 * k,
        trials=10,
    )


def test_mse_figure_written(tmp_path):
    out = tmp_path / "curves.png"
    returned = save_mse_figure(fake_aggregate(), out, title="demo")
    assert returned == str(out)
    assert out.read_bytes()[:8] == PNG_MAGIC


def test_comparison_figure_written(tmp_path):
    out = tmp_path / "overlay.png"
    curves = {
        "flat": np.full(30, 2.0),
        "growing": np.geomspace(1.0, 1e6, 30),
    }
    save_comparison_figure(curves, out)
    assert out.read_bytes()[:8] == PNG_MAGIC


def test_log_scale_handles_nonpositive_values(tmp_path):
    # Curves containing zeros or non-finite entries must not break the
    # autoscale decision.
    out = tmp_path / "edge.png"
    curves = {"spiky": np.array([0.0, 1.0, np.inf, 1e9, np.nan, 5.0])}
    save_comparison_figure(curves, out)
    assert out.read_bytes()[:8] == PNG_MAGIC

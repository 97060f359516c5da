"""Test the accuracy module."""

from __future__ import annotations

import math

import numpy as np
import pytest

from scipy import stats

from conditioned_walk import accuracy
from conditioned_walk.accuracy import (
    ABStatistics,
    AccuracyReport,
    BlockSource,
    HermiteExpansion,
    ab_from_log_densities,
    accuracy_curve,
    ci_bar,
    edgeworth_log_density,
    k_grid,
    proxy_conditional_log_density,
    proxy_log_densities,
    report_rows,
    saddlepoint_log_densities,
    saddlepoint_log_density,
    select_k,
)
from conditioned_walk.exceptions import ConfigError, TargetOutsideRange
from conditioned_walk.models import CenteredExponentialModel, NormalModel
from conditioned_walk.oracles import (
    exponential_conditional_log_density,
    gaussian_conditional_log_density,
)
from conditioned_walk.run_density import RunSpec
from conditioned_walk.tilted_family import CumulantPoint, cumulants_at


def _report(k: int, ere: float, vre: float) -> AccuracyReport:
    """Build a report from its error summary."""
    b_hat = 1.0 - ere
    return AccuracyReport.from_statistics(
        ABStatistics(
            k=k,
            L=100,
            a_hat=vre + b_hat * b_hat,
            b_hat=b_hat,
            a_stderr=0.0,
            b_stderr=0.0,
        ),
    )


def test_saddlepoint_exact_for_normal() -> None:
    """Test the saddlepoint density of a normal mean is exact."""
    n, u = 30, 0.4
    exact = float(stats.norm.logpdf(u, scale=1.0 / math.sqrt(n)))
    assert saddlepoint_log_density(NormalModel(), n, u) == pytest.approx(exact, abs=1e-10)


def test_saddlepoint_exponential_mean() -> None:
    """Test the saddlepoint density of an exponential mean against the Gamma law."""
    n, u = 50, 0.3
    exact = math.log(n) + float(stats.gamma.logpdf(n * (1.0 + u), n))
    approx = saddlepoint_log_density(CenteredExponentialModel(), n, u)
    assert abs(math.expm1(approx - exact)) < 5e-3


def test_saddlepoint_vectorised() -> None:
    """Test the vectorised saddlepoint densities."""
    model = CenteredExponentialModel()
    values = saddlepoint_log_densities(
        model,
        np.array([20.0, 40.0, 40.0]),
        np.array([0.1, -0.2, -3.0]),
    )
    assert values[0] == pytest.approx(saddlepoint_log_density(model, 20, 0.1))
    assert values[1] == pytest.approx(saddlepoint_log_density(model, 40, -0.2))
    assert math.isnan(values[2])
    with pytest.raises(TargetOutsideRange):
        saddlepoint_log_density(model, 10, -3.0)


def test_kappa2_is_p4_at_zero() -> None:
    """Test the second order constant agrees with P4."""
    expansion = HermiteExpansion(order=4, s2=1.7, mu3=0.9, mu4=2.4)
    assert expansion.kappa2 == pytest.approx(-float(expansion.p4(0.0)))
    assert expansion.kappa2 != pytest.approx(expansion.kappa2_printed)
    assert expansion.kappa1 == pytest.approx(0.9 / (2.0 * 1.7**2))


def test_hermite_parity() -> None:
    """Test P3 is odd and P4 is even."""
    expansion = HermiteExpansion(order=4, s2=1.0, mu3=2.0, mu4=6.0)
    z = np.array([0.3, 1.1, 2.5])
    np.testing.assert_allclose(expansion.p3(-z), -expansion.p3(z))
    np.testing.assert_allclose(expansion.p4(-z), expansion.p4(z))
    assert float(expansion.p3(1.0)) == pytest.approx(2.0 / 6.0 * (1.0 - 3.0))


@pytest.mark.parametrize(
    ("kwargs", "match"),
    (
        ({"order": 5, "s2": 1.0, "mu3": 0.0, "mu4": 0.0}, "order"),
        ({"order": 3, "s2": 0.0, "mu3": 0.0, "mu4": 0.0}, "variance"),
    ),
    ids=("order", "variance"),
)
def test_hermite_errors(kwargs: dict[str, float], match: str) -> None:
    """Test invalid expansions.

    Args:
        kwargs: The fields
        match: Expected error text
    """
    with pytest.raises(ValueError, match=match):
        HermiteExpansion(**kwargs)  # type: ignore[arg-type]


def test_edgeworth_normal_summands() -> None:
    """Test the expansion reduces to the normal density without skew."""
    cum = CumulantPoint(t=0.0, m=0.0, s2=1.0, mu3=0.0, mu4=0.0)
    z = np.linspace(-3.0, 3.0, 7)
    np.testing.assert_allclose(edgeworth_log_density(cum, 10, z), stats.norm.logpdf(z), atol=1e-12)
    with pytest.raises(ValueError, match="n >= 2"):
        edgeworth_log_density(cum, 1, z)


def test_edgeworth_exponential_sum() -> None:
    """Test the Edgeworth density of a standardized exponential sum."""
    n = 40
    cum = CumulantPoint(t=0.0, m=0.0, s2=1.0, mu3=2.0, mu4=6.0)
    z = 0.5
    exact = math.log(math.sqrt(n)) + float(stats.gamma.logpdf(n + z * math.sqrt(n), n))
    assert float(edgeworth_log_density(cum, n, z)) == pytest.approx(exact, abs=1e-2)


@pytest.mark.parametrize("n", (2, 7, 50, 1000), ids=("two", "seven", "fifty", "thousand"))
def test_saddlepoint_normal_grid(n: int) -> None:
    """Test the saddlepoint density of a normal mean is exact on a grid.

    Args:
        n: Number of summands
    """
    for u in (-1.0, -0.2, 0.0, 0.4, 2.0):
        exact = float(stats.norm.logpdf(u, scale=1.0 / math.sqrt(n)))
        assert saddlepoint_log_density(NormalModel(), n, u) == pytest.approx(
            exact,
            rel=1e-12,
            abs=1e-12,
        )


def test_saddlepoint_error_shrinks_with_n() -> None:
    """Test the saddlepoint error against the Gamma law across the moderate band."""
    model = CenteredExponentialModel()
    band = np.linspace(0.05, 0.5, 10)
    worst = []
    for n in (50, 100, 500, 1000):
        exact = math.log(n) + stats.gamma.logpdf(n * (1.0 + band), n)
        approx = saddlepoint_log_densities(model, np.full(band.size, float(n)), band)
        worst.append(float(np.max(np.abs(np.expm1(approx - exact)))))
    assert worst == sorted(worst, reverse=True)
    assert len(set(worst)) == len(worst)
    assert max(worst[1:]) < 0.02


@pytest.mark.parametrize("n", (50, 100, 500), ids=("fifty", "hundred", "five-hundred"))
def test_edgeworth_fourth_order_is_sharper(n: int) -> None:
    """Test the fourth order expansion beats the third against the Gamma law.

    Args:
        n: Number of summands
    """
    cum = cumulants_at(CenteredExponentialModel(), 0.0)
    z = np.linspace(-3.0, 3.0, 61)
    exact = math.log(math.sqrt(n)) + stats.gamma.logpdf(n + z * math.sqrt(n), n)
    errors = {
        order: float(np.max(np.abs(np.expm1(edgeworth_log_density(cum, n, z, order) - exact))))
        for order in (3, 4)
    }
    assert errors[4] < errors[3]


def test_proxy_exact_for_normal(normal_spec: RunSpec) -> None:
    """Test the proxy is the exact conditional density of a normal walk.

    Args:
        normal_spec: A normal run
    """
    rng = np.random.default_rng(1)
    y = normal_spec.a + rng.standard_normal(12)
    exact = gaussian_conditional_log_density(normal_spec.n, 12, normal_spec.a, y)
    assert proxy_conditional_log_density(normal_spec, y) == pytest.approx(exact, abs=1e-9)


def test_proxy_close_for_exponential(exponential_spec: RunSpec) -> None:
    """Test the proxy tracks the exact exponential conditional density.

    Args:
        exponential_spec: A centered exponential run
    """
    spec = exponential_spec
    rng = np.random.default_rng(2)
    blocks = rng.standard_exponential((4, spec.k)) - 1.0 + spec.level
    proxy = proxy_log_densities(spec, blocks, [5, spec.k])
    exact = exponential_conditional_log_density(spec.n, spec.k, spec.a, blocks)
    np.testing.assert_allclose(proxy[:, 1], exact, atol=1e-2)
    assert proxy.shape == (4, 2)


def test_proxy_unattainable(exponential_spec: RunSpec) -> None:
    """Test the proxy of a run whose remaining mean is out of range.

    Args:
        exponential_spec: A centered exponential run
    """
    y = np.array([80.0, 0.0, 0.0])
    with pytest.raises(TargetOutsideRange) as exc_info:
        proxy_conditional_log_density(exponential_spec, y)
    assert exc_info.value.step == 3
    with pytest.raises(ValueError, match="does not fit"):
        proxy_conditional_log_density(exponential_spec, np.zeros(exponential_spec.n))


def test_ci_bar() -> None:
    """Test the error interval."""
    summary = ci_bar(1.05, 0.98)
    assert summary.ere_bar == pytest.approx(0.02)
    assert summary.vre_bar == pytest.approx(1.05 - 0.98**2)
    half = 2.0 * math.sqrt(1.05 - 0.98**2)
    assert summary.ci_lo == pytest.approx(0.02 - half)
    assert summary.ci_hi == pytest.approx(0.02 + half)
    negative = ci_bar(0.9, 0.98)
    assert negative.ci_lo == negative.ci_hi == pytest.approx(0.02)


def test_ab_under_h_blocks() -> None:
    """Test A and B when the product density equals the reference."""
    log_h = np.array([-1.0, -2.0, math.nan, -0.5])
    stats_k = ab_from_log_densities(3, log_h, log_h, source=BlockSource.H, requested=4)
    assert stats_k.a_hat == pytest.approx(1.0)
    assert stats_k.b_hat == pytest.approx(1.0)
    assert stats_k.dropped == 1
    assert stats_k.drop_rate == pytest.approx(0.25)


def test_ab_under_px_blocks() -> None:
    """Test A and B weights under p_X blocks."""
    log_h = np.log(np.array([2.0, 0.5]))
    log_ref = np.log(np.array([1.0, 1.0]))
    log_px = np.log(np.array([0.5, 0.25]))
    stats_k = ab_from_log_densities(2, log_h, log_ref, log_px)
    # h**2 / (ref px) = 8, 1 and h**3 / (ref**2 px) = 16, 0.5
    assert stats_k.b_hat == pytest.approx(4.5)
    assert stats_k.a_hat == pytest.approx(8.25)
    with pytest.raises(ValueError, match="log p_X"):
        ab_from_log_densities(2, log_h, log_ref)


def test_accuracy_curve_exact_normal(normal_spec: RunSpec) -> None:
    """Test a normal curve certifies zero error when the product is exact.

    Args:
        normal_spec: A normal run
    """
    reports = accuracy_curve(normal_spec, [20, 5, 10, 10], L=100, source=BlockSource.H)
    assert [report.k for report in reports] == [5, 10, 20]
    for report in reports:
        assert report.ere_bar == pytest.approx(0.0, abs=1e-8)
        assert report.vre_bar == pytest.approx(0.0, abs=1e-8)
        assert report.drop_rate == 0.0
        assert report.L == 100


def test_accuracy_curve_exponential(exponential_spec: RunSpec) -> None:
    """Test a short exponential curve from p_X blocks.

    Args:
        exponential_spec: A centered exponential run
    """
    reports = accuracy_curve(exponential_spec, [2, 5], L=500)
    again = accuracy_curve(exponential_spec, [2, 5], L=500)
    assert [report.ere_bar for report in reports] == [report.ere_bar for report in again]
    for report in reports:
        assert abs(report.ere_bar) < 0.15
        assert report.ci_lo <= report.ere_bar <= report.ci_hi


def test_accuracy_curve_errors(normal_spec: RunSpec) -> None:
    """Test invalid curve requests.

    Args:
        normal_spec: A normal run
    """
    with pytest.raises(ConfigError, match="blocks"):
        accuracy_curve(normal_spec, [5], L=10)
    with pytest.raises(ConfigError, match="Run lengths"):
        accuracy_curve(normal_spec, [normal_spec.n], L=100)


@pytest.mark.parametrize(
    ("n", "cap", "stride", "expected_len", "expected_tail"),
    (
        (100, 98, None, 98, [97, 98]),
        (1000, 998, None, 101, [991, 998]),
        (50, 20, 7, 4, [15, 20]),
    ),
    ids=("small", "large", "explicit"),
)
def test_k_grid(
    n: int,
    cap: int,
    stride: int | None,
    expected_len: int,
    expected_tail: list[int],
) -> None:
    """Test the scanned run lengths.

    Args:
        n: The walk length
        cap: The largest run length
        stride: The grid step
        expected_len: Number of run lengths
        expected_tail: The last two run lengths
    """
    grid = k_grid(n, cap, stride)
    assert grid[0] == 1
    assert len(grid) == expected_len
    assert grid[-2:] == expected_tail


def test_k_grid_stride() -> None:
    """Test a grid step below one."""
    with pytest.raises(ConfigError, match="stride"):
        k_grid(100, 98, 0)


def test_select_k_first_entry(monkeypatch: pytest.MonkeyPatch, normal_spec: RunSpec) -> None:
    """Test the first run length whose interval holds delta is selected.

    Args:
        monkeypatch: Pytest fixture.
        normal_spec: A normal run
    """
    curve = [
        _report(1, 0.0, 0.0),
        _report(2, 0.01, 0.0001),
        _report(3, 0.04, 0.0004),
        _report(4, 0.07, 0.0),
        _report(5, 0.05, 0.0009),
    ]

    def fake_curve(*_args: object, **_kwargs: object) -> list[AccuracyReport]:
        return curve

    monkeypatch.setattr(accuracy, "accuracy_curve", fake_curve)
    result = select_k(normal_spec, delta=0.05, L=100)
    assert result.k_delta == 3
    assert result.last_exit == 5
    assert not result.cap_reached
    assert result.reports[2].k_delta == 3
    assert result.reports[4].k_delta is None
    assert result.regime is not None
    assert result.regime.k == 3


def test_select_k_cap(normal_spec: RunSpec) -> None:
    """Test the cap is flagged when no interval reaches delta.

    Args:
        normal_spec: A normal run
    """
    result = select_k(normal_spec, delta=0.05, L=100, stride=9, source=BlockSource.H)
    assert result.cap_reached
    assert result.k_delta == normal_spec.n - 2
    assert result.last_exit is None
    assert result.reports[-1].k == normal_spec.n - 2


@pytest.mark.parametrize("delta", (0.0, 1.0, -0.1), ids=("zero", "one", "negative"))
def test_select_k_delta(normal_spec: RunSpec, delta: float) -> None:
    """Test budgets outside (0, 1).

    Args:
        normal_spec: A normal run
        delta: The budget
    """
    with pytest.raises(ConfigError, match="budget"):
        select_k(normal_spec, delta=delta)


def test_report_rows() -> None:
    """Test the CSV rows of a curve."""
    rows = report_rows([_report(4, 0.02, 0.0004)])
    assert rows[0][0] == 4
    assert rows[0][1] == pytest.approx(0.02)
    assert rows[0][3] == pytest.approx(0.02 - 0.04)
    assert rows[0][5] == 100
    assert rows[0][6] == 0.0


def test_report_contains() -> None:
    """Test delta membership of the interval."""
    report = _report(2, 0.04, 0.0004)
    assert report.contains(0.05)
    assert not report.contains(0.1)
    assert report.ere_stderr == 0.0

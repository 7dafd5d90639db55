import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from flockspec.dynamics import alignment_commutator_field
from flockspec.oracle import (
    OracleError, PeriodizedKernel, QuadratureSpec, commutator_direct, d_alpha_direct,
    kernel_minimum, kernel_value, lambda_direct, nl_max_principle_constant, nl_max_ratios,
    normalization_constant,
)
from flockspec.torus import ScalarField, fractional_laplacian, make_grid
from flockspec.verify import pointwise_identity_residual, random_band_limited, sample_points


def _gen(seed):
    return np.random.Generator(np.random.Philox(seed))


# ---- normalisation constant ------------------------------------------------

def test_constant_1d_alpha_1():
    assert normalization_constant(1, 1.0) == pytest.approx(1.0 / np.pi, rel=1e-14)


@pytest.mark.parametrize("alpha", [0.3, 0.8, 1.2, 1.7])
def test_constant_reproduces_unit_symbol_1d(alpha):
    # c * int_R (1 - cos z) |z|^{-1-alpha} dz must equal |1|^alpha = 1
    head = integrate.quad(lambda z: (1 - np.cos(z)) * z ** (-1 - alpha), 0, 1, limit=200)[0]
    tail = integrate.quad(lambda z: z ** (-1 - alpha), 1, np.inf)[0]
    osc = integrate.quad(lambda z: z ** (-1 - alpha), 1, np.inf, weight="cos", wvar=1.0)[0]
    assert normalization_constant(1, alpha) * 2 * (head + tail - osc) == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_constant_reproduces_unit_symbol_2d(alpha):
    # radial form: int_R2 (1 - cos z1) |z|^{-2-alpha} dz = int_0^inf r^{-1-alpha} 2pi (1 - J0(r)) dr
    from scipy.special import j0
    head = integrate.quad(lambda r: (1 - j0(r)) * r ** (-1 - alpha), 0, 50, limit=400)[0]
    tail = 50.0 ** -alpha / alpha
    edges = np.arange(50.0, 20000.0, 50.0)
    tail -= sum(integrate.quad(lambda r: j0(r) * r ** (-1 - alpha), a, a + 50, limit=200)[0]
                for a in edges)
    assert normalization_constant(2, alpha) * 2 * np.pi * (head + tail) == pytest.approx(1.0, rel=1e-6)


# ---- periodised kernel -----------------------------------------------------

def test_kernel_zero_image_lower_bound():
    v, b = kernel_value(np.pi, PeriodizedKernel(0.5, 1))
    assert v >= np.pi ** -1.5
    assert b >= 0


@settings(max_examples=50, deadline=None)
@given(z=st.floats(-3.1, 3.1).filter(lambda z: abs(z) > 1e-3), alpha=st.floats(0.1, 1.9))
def test_kernel_symmetric_positive_1d(z, alpha):
    k = PeriodizedKernel(alpha, 1)
    assert kernel_value(z, k)[0] == kernel_value(-z, k)[0]
    assert kernel_value(z, k)[0] > 0


def test_kernel_symmetric_2d():
    k = PeriodizedKernel(1.3, 2)
    z = np.array([[0.4, -1.2], [2.9, 3.0], [-0.01, 0.2]])
    v1, _ = kernel_value(z, k)
    v2, _ = kernel_value(-z, k)
    assert np.array_equal(v1, v2)
    assert np.all(v1 > 0)


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_kernel_truncation_self_consistent(dim, alpha):
    z = np.array([[2.0, -1.5], [np.pi, np.pi], [0.3, 0.1]])[:, :dim]
    v20, b20 = PeriodizedKernel(alpha, dim, 20).evaluate(z)
    v40, b40 = PeriodizedKernel(alpha, dim, 40).evaluate(z)
    assert np.all(np.abs(v20 - v40) <= b20 + b40 + 1e-15 * v40)


def test_kernel_tail_bound_shrinks_with_shell():
    assert PeriodizedKernel(1.0, 2, 40).tail_bound < PeriodizedKernel(1.0, 2, 20).tail_bound


def test_kernel_brute_force_1d():
    # direct sum over many images with an integral tail estimate
    alpha, z = 0.7, 1.1
    k = np.arange(-200000, 200001)
    direct = np.sum(np.abs(z + 2 * np.pi * k) ** (-1 - alpha))
    # remaining |k| > 200000 contributes about 2 (2pi)^{-s} K^{1-s}/(s-1)
    s, K = 1 + alpha, 200000.5
    direct += 2 * (2 * np.pi) ** -s * K ** (1 - s) / (s - 1)
    v, b = kernel_value(z, PeriodizedKernel(alpha, 1))
    assert abs(v - direct) < 1e-9 * direct


def test_kernel_is_periodic():
    k = PeriodizedKernel(1.2, 1)
    assert kernel_value(0.5, k)[0] == pytest.approx(kernel_value(0.5 + 2 * np.pi, k)[0], rel=1e-14)


def test_kernel_singular_at_lattice():
    with pytest.raises(ValueError):
        kernel_value(2 * np.pi, PeriodizedKernel(1.0, 1))
    with pytest.raises(ValueError):
        kernel_value(np.zeros(2), PeriodizedKernel(1.0, 2))


def test_kernel_minimum_positive_and_at_corner():
    for dim in (1, 2):
        k = PeriodizedKernel(1.5, dim)
        m = kernel_minimum(k)
        assert m > 0
        corner = kernel_value(np.full(dim, np.pi) if dim == 2 else np.pi, k)[0]
        assert m == pytest.approx(corner, rel=1e-12)


@pytest.mark.parametrize("bad", [dict(alpha=2.0, dim=1), dict(alpha=1.0, dim=3),
                                 dict(alpha=1.0, dim=1, shell_radius=2)])
def test_kernel_rejects(bad):
    with pytest.raises(ValueError):
        PeriodizedKernel(**bad)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(inner_radius=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(inner_radius=0.1, shell_radius=2)
    q = QuadratureSpec.for_grid(make_grid(1, 64))
    assert q.inner_radius >= make_grid(1, 64).spacing


def test_truncation_failure_reported():
    g = make_grid(2, 16)
    f = ScalarField.from_function(g, lambda x, y: np.cos(x))
    quad = QuadratureSpec.for_grid(g, 2, shell_radius=3, tail_tolerance=1e-12)
    with pytest.raises(OracleError):
        lambda_direct(f, np.array([0.0, 0.0]), 0.5, quad)


# ---- lambda_direct ---------------------------------------------------------

@pytest.mark.parametrize("dim", [1, 2])
def test_lambda_direct_constant(dim):
    g = make_grid(dim, 16)
    f = ScalarField(g, np.full(g.shape, 3.0))
    assert np.max(np.abs(lambda_direct(f, g.points[:5], 1.2))) < 1e-12


@pytest.mark.parametrize("dim", [1, 2])
def test_lambda_direct_cosine_eigenvalue(dim):
    g = make_grid(dim, 32)
    f = ScalarField(g, np.cos(g.coordinates[0]))
    x = np.array([[0.3, 1.0], [2.0, 5.0], [4.4, 0.0]])[:, :dim]
    out = lambda_direct(f, x, 1.0)
    assert np.max(np.abs(out - np.cos(x[:, 0]))) < 1e-5


def test_lambda_direct_single_point_returns_float():
    g = make_grid(2, 16)
    f = ScalarField(g, np.cos(g.coordinates[0]))
    assert isinstance(lambda_direct(f, np.array([0.1, 0.2]), 1.0), float)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_lambda_direct_random_field_n64(alpha):
    g = make_grid(1, 64)
    rng = _gen(7)
    f = ScalarField(g, random_band_limited(g, 16, rng))
    pts = sample_points(g, 10, rng)
    spec = fractional_laplacian(f, alpha)
    idx = np.rint(pts[:, 0] / g.spacing).astype(int)
    err = np.max(np.abs(lambda_direct(f, pts, alpha) - spec.values[idx]))
    assert err / np.max(np.abs(spec.values)) < 1e-6


def test_lambda_direct_off_grid_points():
    g = make_grid(1, 32)
    f = ScalarField(g, np.sin(3 * g.coordinates[0]))
    x = np.array([0.123, 1.777])
    assert np.allclose(lambda_direct(f, x, 0.7), 3**0.7 * np.sin(3 * x), atol=1e-8)


# ---- D_alpha ---------------------------------------------------------------

def test_d_alpha_constant_vector_vanishes():
    g = make_grid(2, 16)
    gvec = [ScalarField(g, np.full(g.shape, 1.5)), ScalarField(g, np.full(g.shape, -2.0))]
    assert np.max(np.abs(d_alpha_direct(gvec, g.points[:4], 1.0))) < 1e-12


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(0.2, 1.8))
def test_d_alpha_nonnegative(seed, alpha):
    g = make_grid(1, 32)
    rng = _gen(seed)
    gf = ScalarField(g, random_band_limited(g, 6, rng))
    assert np.all(d_alpha_direct(gf, sample_points(g, 8, rng), alpha) >= 0)


@pytest.mark.parametrize("dim", [1, 2])
def test_pointwise_identity(dim):
    g = make_grid(dim, 32)
    rng = _gen(11)
    f = ScalarField(g, random_band_limited(g, 4, rng))
    assert pointwise_identity_residual(f, 1.5, sample_points(g, 8, rng)) < 1e-5


def test_d_alpha_single_mode_closed_form():
    # g = cos x: D(g)(x) = 2 * (Lambda(g^2)/2 ... ) -> use |g(x+z)-g(x)|^2 identity
    # sum over images of (cos(x+z) - cos x)^2 integrated gives 2 (g Lambda g) - Lambda(g^2)
    g = make_grid(1, 32)
    x = g.coordinates[0]
    gf = ScalarField(g, np.cos(x))
    expected = 2 * np.cos(x) * np.cos(x) - 2 ** 1.2 * 0.5 * np.cos(2 * x)  # alpha = 1.2
    pts = g.points[::5]
    out = d_alpha_direct(gf, pts, 1.2)
    assert np.allclose(out, expected[::5], atol=1e-8)


# ---- commutator ------------------------------------------------------------

def test_commutator_constant_u():
    g = make_grid(1, 32)
    rng = _gen(3)
    u = ScalarField(g, np.full(32, 0.7))
    rho = ScalarField(g, 1.5 + 0.5 * random_band_limited(g, 4, rng))
    assert np.max(np.abs(commutator_direct(u, rho, g.points[:6], 1.5))) < 1e-11


@pytest.mark.parametrize("dim", [1, 2])
def test_commutator_constant_rho(dim):
    g = make_grid(dim, 32)
    rng = _gen(4)
    u = ScalarField(g, random_band_limited(g, 4, rng))
    rho = ScalarField(g, np.full(g.shape, 2.5))
    pts = sample_points(g, 6, rng)
    expected = -2.5 * fractional_laplacian(u, 1.1).values.reshape(-1)
    idx = np.ravel_multi_index(tuple(np.rint(pts / g.spacing).astype(int).T), g.shape)
    assert np.max(np.abs(commutator_direct(u, rho, pts, 1.1) - expected[idx])) < 1e-5


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_commutator_generic_n64(alpha):
    g = make_grid(1, 64)
    rng = _gen(5)
    u = ScalarField(g, random_band_limited(g, 8, rng))
    rho = ScalarField(g, 1.5 + 0.5 * random_band_limited(g, 8, rng))
    pts = sample_points(g, 10, rng)
    spec = alignment_commutator_field(u, rho, alpha).values
    idx = np.rint(pts[:, 0] / g.spacing).astype(int)
    err = np.max(np.abs(commutator_direct(u, rho, pts, alpha) - spec[idx]))
    assert err / np.max(np.abs(spec)) < 1e-5


def test_commutator_grid_mismatch():
    u = ScalarField(make_grid(1, 16), np.zeros(16))
    rho = ScalarField(make_grid(1, 32), np.ones(32))
    with pytest.raises(ValueError):
        commutator_direct(u, rho, 0.0, 1.0)


# ---- nonlinear maximum principle --------------------------------------------

def test_nl_max_excludes_critical_points():
    g = make_grid(1, 32)
    f = ScalarField(g, np.sin(g.coordinates[0]))
    r = nl_max_ratios(f, 1.5, points=np.array([np.pi / 2, 3 * np.pi / 2]))
    assert r.size == 0
    r = nl_max_ratios(f, 1.5, points=np.array([np.pi / 2, 0.3]))
    assert r.size == 1 and np.isfinite(r[0]) and r[0] > 0


def test_nl_max_scale_invariant():
    g = make_grid(1, 32)
    rng = _gen(9)
    f = random_band_limited(g, 4, rng)
    pts = sample_points(g, 8, rng)
    a = nl_max_ratios(ScalarField(g, f), 1.5, pts)
    b = nl_max_ratios(ScalarField(g, 2 * f), 1.5, pts)
    assert np.max(np.abs(a - b) / a) < 1e-10


def test_nl_max_constant_positive_small_suite():
    g = make_grid(1, 32)
    rng = _gen(10)
    fields = [ScalarField(g, random_band_limited(g, 4, rng)) for _ in range(3)]
    assert nl_max_principle_constant(fields, 1.5) > 0


def test_nl_max_empty_suite():
    with pytest.raises(ValueError):
        nl_max_principle_constant([], 1.5)

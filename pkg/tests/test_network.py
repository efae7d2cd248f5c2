import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import networks
from quantcert.errors import HypothesisViolation, SchemaError, StructuralError, UnsupportedRegime
from quantcert.lipschitz import make_witness_pair
from quantcert.network import (
    Architecture,
    BoxDomain,
    NetworkParams,
    NormSpec,
    activation_pattern,
    domain_constant,
    linf_box_moment,
    network_from_json,
    network_to_json,
    operator_norm,
    param_set_membership,
    partial_realizations,
    quantized_from_json,
    quantized_to_json,
    realize,
    realize_batch,
    sample_member,
    default_rng,
    spectral_norm_power,
    vector_norm,
)


def scalar_net(*layers):
    arch = Architecture((1,) * (len(layers) + 1))
    return NetworkParams(arch, [np.array([[w]]) for w, _ in layers], [np.array([b]) for _, b in layers])


def reference_realize(theta, x):
    """Plain-Python forward pass, used as an oracle."""
    y = [float(v) for v in x]
    for l, (W, b) in enumerate(zip(theta.weights, theta.biases)):
        if l > 0:
            y = [max(0.0, v) for v in y]
        y = [sum(W[i, j] * y[j] for j in range(len(y))) + b[i] for i in range(len(b))]
    return np.array(y)


# -- architecture -----------------------------------------------------------

def test_parameter_dim_counts_weights_and_biases():
    arch = Architecture((3, 5, 2))
    assert arch.parameter_dim() == 5 * 4 + 2 * 6
    assert (arch.depth, arch.width(), arch.min_width()) == (2, 5, 2)


@pytest.mark.parametrize("widths", [(), (3,), (2, 0, 1)])
def test_bad_architectures_rejected(widths):
    with pytest.raises(StructuralError):
        Architecture(widths)


@given(networks())
def test_flatten_roundtrip(theta):
    vec = theta.flatten()
    assert len(vec) == theta.arch.parameter_dim()
    back = NetworkParams.unflatten(theta.arch, vec)
    assert back.equals(theta)
    assert theta.max_abs() == np.max(np.abs(vec))


def test_shape_mismatch_is_structural():
    arch = Architecture((2, 1))
    with pytest.raises(StructuralError):
        NetworkParams(arch, [np.zeros((2, 1))], [np.zeros(1)])
    with pytest.raises(StructuralError):
        realize(NetworkParams.zeros(arch), [1.0, 2.0, 3.0])


def test_non_finite_parameters_rejected():
    arch = Architecture((1, 1))
    with pytest.raises(StructuralError):
        NetworkParams(arch, [np.array([[np.nan]])], [np.zeros(1)])


# -- realization ------------------------------------------------------------

def test_no_relu_on_output_layer():
    assert realize(scalar_net((1.0, 0.0)), [-3.0]).tolist() == [-3.0]


def test_relu_kills_negative_hidden_value():
    assert realize(scalar_net((1.0, 0.0), (1.0, 0.0)), [-3.0]).tolist() == [0.0]


def test_witness_pair_evaluates_by_hand():
    pair = make_witness_pair(Architecture((1, 1, 1)), (1.0, 1.0), 1.0)
    assert realize(pair.theta, [2.0]).tolist() == [2.0]
    assert realize(pair.theta_prime, [2.0]).tolist() == [8.0]


@given(networks(), st.integers(0, 2 ** 32 - 1))
def test_realize_matches_scalar_oracle(theta, seed):
    x = np.random.default_rng(seed).uniform(-3, 3, theta.arch.d_in)
    np.testing.assert_allclose(realize(theta, x), reference_realize(theta, x), rtol=1e-12, atol=1e-12)


@given(networks(), st.integers(0, 2 ** 32 - 1))
def test_batch_agrees_with_single_points_bitwise(theta, seed):
    X = np.random.default_rng(seed).uniform(-2, 2, (7, theta.arch.d_in))
    batch = realize_batch(theta, X)
    for i in range(len(X)):
        assert np.array_equal(batch[i], realize(theta, X[i]))


@given(networks(), st.integers(0, 2 ** 32 - 1))
def test_affine_inside_one_activation_region(theta, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, theta.arch.d_in)
    y = x + 1e-4 * rng.standard_normal(theta.arch.d_in)
    mid = 0.5 * (x + y)
    pats = activation_pattern(theta, np.stack([x, y, mid]))
    if not (np.array_equal(pats[0], pats[1]) and np.array_equal(pats[0], pats[2])):
        return
    f = realize_batch(theta, np.stack([x, y, mid]))
    np.testing.assert_allclose(f[2], 0.5 * (f[0] + f[1]), rtol=1e-9, atol=1e-9)


@given(networks(), st.sampled_from(["1", "2", "inf"]), st.integers(0, 2 ** 32 - 1))
def test_output_norm_bounded_by_weight_products(theta, q, seed):
    x = np.random.default_rng(seed).uniform(-2, 2, theta.arch.d_in)
    norms = [operator_norm(w, q) for w in theta.weights]
    L = theta.depth
    bound = math.prod(norms) * vector_norm(x, q) + sum(
        math.prod(norms[l + 1:]) * vector_norm(theta.biases[l], q) for l in range(L))
    assert vector_norm(realize(theta, x), q) <= bound * (1 + 1e-12) + 1e-12


def test_witness_scaling_is_homogeneous():
    arch = Architecture((2, 3, 2))
    pair = make_witness_pair(arch, (1.5, 2.0), 0.0)
    x = np.array([0.3, 0.7])
    scaled = make_witness_pair(arch, (3.0, 2.0), 0.0)
    np.testing.assert_allclose(realize(scaled.theta, x), 2.0 * realize(pair.theta, x), rtol=1e-15)


def test_partial_realizations_are_truncated_networks():
    theta = NetworkParams.unflatten(Architecture((2, 3, 3, 1)), np.linspace(-1, 1, 25))
    X = np.array([[0.5, -0.25], [1.0, 1.0]])
    parts = partial_realizations(theta, X)
    for l in range(1, theta.depth + 1):
        np.testing.assert_array_equal(parts[l - 1], realize_batch(theta.truncated(l), X))


# -- norms ------------------------------------------------------------------

@pytest.mark.parametrize("q, expected", [("inf", 7.0), ("1", 6.0), ("fro", math.sqrt(30.0)), ("max", 4.0)])
def test_operator_norm_examples(q, expected):
    assert operator_norm(np.array([[1.0, -2.0], [3.0, 4.0]]), q) == pytest.approx(expected, rel=1e-15)


def test_spectral_norm_of_diagonal():
    assert operator_norm(np.diag([3.0, 4.0]), "2") == pytest.approx(4.0, rel=1e-12)


def test_empty_matrix_rejected():
    with pytest.raises(StructuralError):
        operator_norm(np.zeros((0, 3)), "2")


@given(st.integers(1, 90), st.integers(1, 90), st.integers(0, 2 ** 32 - 1))
def test_power_iteration_matches_svd(m, n, seed):
    M = np.random.default_rng(seed).standard_normal((m, n))
    assert spectral_norm_power(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-9)
    assert operator_norm(M, "2") == pytest.approx(np.linalg.norm(M, 2), rel=1e-9)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_operator_norms_agree_with_numpy(m, n, seed):
    M = np.random.default_rng(seed).standard_normal((m, n))
    assert operator_norm(M, "1") == pytest.approx(np.linalg.norm(M, 1), rel=1e-13)
    assert operator_norm(M, "inf") == pytest.approx(np.linalg.norm(M, np.inf), rel=1e-13)


def test_norm_aliases():
    assert NormSpec.parse("F") is NormSpec.FRO
    assert NormSpec.parse(math.inf) is NormSpec.INF
    with pytest.raises(ValueError):
        NormSpec.parse("3")


# -- membership -------------------------------------------------------------

@pytest.mark.parametrize("q", ["1", "2", "inf", "fro", "max"])
def test_zero_network_in_every_ball(q):
    assert param_set_membership(NetworkParams.zeros(Architecture((3, 2, 1))), q, 0.0)


@pytest.mark.parametrize("q", ["1", "2", "inf"])
def test_scaled_identity_on_the_boundary(q):
    r = 1.7
    pair = make_witness_pair(Architecture((3, 4, 2, 5)), r, 0.0)
    assert param_set_membership(pair.theta, q, r)
    assert not param_set_membership(pair.theta, q, r * (1 - 1e-9))


@given(networks(scale=1.0), st.floats(0.5, 3.0))
def test_max_ball_inside_scaled_operator_ball(theta, r):
    if param_set_membership(theta, "max", r):
        assert param_set_membership(theta, "inf", theta.arch.width() * r)
        assert param_set_membership(theta, "1", theta.arch.width() * r)


@given(networks(scale=1.0), st.floats(0.5, 3.0))
def test_frobenius_ball_inside_spectral_ball(theta, r):
    if param_set_membership(theta, "fro", r):
        assert param_set_membership(theta, "2", r)


def test_membership_report_lists_layers():
    rep = param_set_membership(scalar_net((2.0, -1.0), (0.5, 3.0)), "inf", 2.5)
    assert not rep
    assert rep.layers == ((2.0, 1.0), (0.5, 3.0))


def test_negative_radius_rejected():
    with pytest.raises(HypothesisViolation):
        param_set_membership(scalar_net((1.0, 0.0)), "inf", -1.0)


@pytest.mark.parametrize("q", ["1", "2", "inf", "fro", "max"])
def test_sampled_members_are_members(q):
    rng = default_rng(7)
    arch = Architecture((2, 4, 3, 1))
    for _ in range(20):
        assert param_set_membership(sample_member(arch, q, 1.5, rng), q, 1.5, rtol=0.0)


def test_sampling_is_reproducible():
    arch = Architecture((2, 3, 1))
    a = sample_member(arch, "2", 1.0, default_rng(42))
    b = sample_member(arch, "2", 1.0, default_rng(42))
    assert a.equals(b)


# -- domain constants -------------------------------------------------------

def test_domain_constant_examples():
    assert domain_constant(math.inf, BoxDomain(4, 1.0), "2") == pytest.approx(3.0)
    assert domain_constant(math.inf, BoxDomain(1, 2.0), "inf") == pytest.approx(3.0)
    assert domain_constant(1.0, BoxDomain(1, 1.0), "inf") == pytest.approx(4.0)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
def test_closed_form_dominates_linf_moment(d, p):
    box = BoxDomain(d, 1.5)
    exact = linf_box_moment(p, box)
    assert exact <= domain_constant(p, box, "inf") * (1 + 1e-12)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_cubature_in_one_dimension_matches_closed_integral(p):
    # in d = 1 every q-norm is |x|, so the integral is 2 * int_0^D (t+1)^p dt
    D = 1.3
    exact = (2.0 * ((D + 1) ** (p + 1) - 1) / (p + 1)) ** (1 / p)
    assert domain_constant(p, BoxDomain(1, D), "2") == pytest.approx(exact, rel=1e-8)
    assert domain_constant(p, BoxDomain(1, D), "1") == pytest.approx(exact, rel=1e-8)


def test_cubature_against_monte_carlo():
    box = BoxDomain(2, 1.0)
    X = default_rng(3).uniform(-1, 1, (400_000, 2))
    mc = math.sqrt(4.0 * np.mean((np.linalg.norm(X, axis=1) + 1) ** 2))
    assert domain_constant(2.0, box, "2") == pytest.approx(mc, rel=2e-3)


def test_domain_constant_errors():
    with pytest.raises(HypothesisViolation):
        domain_constant(0.5, BoxDomain(1, 1.0), "inf")
    with pytest.raises(UnsupportedRegime):
        domain_constant(math.inf, BoxDomain(1, 1.0), "fro")
    with pytest.raises(HypothesisViolation):
        domain_constant(2.0, BoxDomain(5, 1.0), "2")


# -- JSON -------------------------------------------------------------------

@given(networks(), st.integers(0, 2 ** 32 - 1))
def test_json_roundtrip_is_bit_exact(theta, seed):
    import json

    doc = json.loads(json.dumps(network_to_json(theta)))
    back = network_from_json(doc)
    X = np.random.default_rng(seed).uniform(-1, 1, (20, theta.arch.d_in))
    assert np.array_equal(realize_batch(back, X), realize_batch(theta, X))


def test_missing_field_named():
    with pytest.raises(SchemaError, match="widths"):
        network_from_json({"layers": []})
    with pytest.raises(SchemaError, match="'b'"):
        network_from_json({"widths": [1, 1], "layers": [{"W": [[1.0]]}]})


@pytest.mark.parametrize("doc", [
    {"widths": [1, 1], "layers": [{"W": [[True]], "b": [0.0]}]},
    {"widths": [1, 1], "layers": [{"W": [["1"]], "b": [0.0]}]},
    {"widths": [1, 1], "layers": [{"W": [[1.0, 2.0]], "b": [0.0]}]},
    {"widths": [1, 1], "layers": [{"W": [[1.0]], "b": [0.0], "extra": 1}]},
    {"widths": [1, 1], "layers": [], "meta": 1},
])
def test_malformed_documents_rejected(doc):
    with pytest.raises(SchemaError):
        network_from_json(doc)


def test_quantized_roundtrip_exact():
    eta = 2.0 ** -40
    theta = NetworkParams.unflatten(Architecture((2, 2, 1)), np.array([3, -5, 7, 2 ** 45, 0, 1, -1, 2, 9]) * eta)
    doc = quantized_to_json(theta, eta, math.inf)
    assert doc["grid_bound"] is None
    back, eta2, bound = quantized_from_json(doc)
    assert back.equals(theta) and eta2 == eta and math.isinf(bound)


def test_quantized_writer_refuses_off_grid():
    with pytest.raises(StructuralError):
        quantized_to_json(scalar_net((0.3, 0.0)), 0.25, 1.0)

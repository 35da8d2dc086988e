"""Differentiation engine, network plumbing, optimizers, and checkpoints."""

import numpy as np
import pytest

from helpers import (
    backprop_grads,
    finite_difference,
    relative_error,
    small_classifier,
)
from privdistill import autodiff as ad
from privdistill.checkpoint import read_checkpoint, write_checkpoint
from privdistill.errors import (
    ConfigurationError,
    FormatError,
    GraphError,
    ShapeError,
    TrainingError,
)
from privdistill.generator import GeneratorConfig, generator_architecture, generator_loss
from privdistill.network import (
    ParamSet,
    forward,
    head_boundary,
    param_vars,
    run_layers,
    validate_architecture,
    xavier_init,
)
from privdistill.optim import AdamState, adam_update, decayed_lr, sgd_update
from privdistill.student import StudentLossWeights, supervised_energy, unsupervised_energy
from privdistill.vae import decoder_architecture, encoder_architecture, vae_loss, VaeConfig


# --- gradient suite: backprop vs central finite differences ------------


def _split(pvars, prefix):
    return {k[len(prefix) :]: v for k, v in pvars.items() if k.startswith(prefix)}


def _case_classifier(rng):
    net = small_classifier(dim=4, hidden=5, classes=3, seed=int(rng.integers(1 << 30)))
    x = rng.normal(size=(6, 4))
    y = rng.integers(0, 3, size=6)

    def build(pvars):
        _, probs = forward(net, x, pvars=pvars)
        return ad.cross_entropy(probs, y)

    return dict(net.entries), build


def _case_activations(rng):
    w = rng.normal(size=(4, 4))
    x = rng.normal(size=(5, 4))

    def build(pvars):
        h = ad.matmul(ad.Var(x), pvars["w"])
        s = ad.sigmoid(h) + ad.tanh(h) - ad.relu(h)
        return ad.vmean(ad.square(s))

    return {"w": w}, build


def _case_exp_log(rng):
    w = 0.5 * rng.normal(size=(3, 3))

    def build(pvars):
        pos = 1.0 + ad.square(ad.exp(pvars["w"]))
        return ad.vsum(ad.log(pos))

    return {"w": w}, build


def _case_abs_clip_slice(rng):
    w = rng.normal(size=(4, 6))

    def build(pvars):
        cols = ad.slice_cols(pvars["w"], 1, 5)
        return ad.vsum(ad.absolute(ad.clip(cols, -0.9, 0.9)))

    return {"w": w}, build


def _case_softmax_entropy(rng):
    w = rng.normal(size=(4, 5))
    x = rng.normal(size=(6, 4))

    def build(pvars):
        probs = ad.softmax_rows(ad.matmul(ad.Var(x), pvars["w"]))
        ent = ad.vmean(ad.entropy_rows(probs))
        bal = ad.xlogx_sum(ad.vmean(probs, axis=0))
        return ent + 0.5 * bal

    return {"w": w}, build


def _case_broadcast_mix(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    c = rng.normal(size=(2,))

    def build(pvars):
        prod = ad.matmul(pvars["a"], pvars["b"]) + pvars["c"]
        return ad.vsum(ad.mul(prod, prod) - ad.mul(prod, 0.25))

    return {"a": a, "b": b, "c": c}, build


def _case_generator_loss(rng):
    seed = int(rng.integers(1 << 30))
    disc = small_classifier(dim=3, hidden=4, classes=3, seed=seed)
    cfg = GeneratorConfig(latent_dim=2, hidden=4, output_scale=0.5, seed=seed)
    gen = xavier_init(generator_architecture(cfg, 3), seed + 1, feature_boundary=None)
    # the pseudo-labels are an argmax; keep the top-2 margin away from the
    # finite-difference step so the loss is smooth on the probed interval
    while True:
        z = rng.normal(size=(5, 2))
        batch = run_layers(gen, z)[-1].value
        probs = np.sort(forward(disc, batch)[1].value, axis=1)
        if np.all(probs[:, -1] - probs[:, -2] > 1e-3):
            break

    def build(pvars):
        batch_x = run_layers(gen, z, pvars=pvars)[-1]
        return generator_loss(disc, batch_x, cfg)

    return dict(gen.entries), build


def _case_elbo(rng):
    seed = int(rng.integers(1 << 30))
    cfg = VaeConfig(latent_dim=2, hidden=4, seed=seed)
    enc = xavier_init(encoder_architecture(cfg, 3), seed, feature_boundary=None)
    dec = xavier_init(decoder_architecture(cfg, 3), seed + 1, feature_boundary=None)
    x = rng.normal(size=(5, 3))
    zeta = rng.normal(size=(5, 2))

    def build(pvars):
        return vae_loss(enc, dec, x, zeta, _split(pvars, "enc."), _split(pvars, "dec."))

    params = {f"enc.{k}": v for k, v in enc.entries.items()}
    params.update({f"dec.{k}": v for k, v in dec.entries.items()})
    return params, build


def _case_student_energy(rng):
    seed = int(rng.integers(1 << 30))
    student = small_classifier(dim=3, hidden=4, classes=3, seed=seed)
    x = rng.normal(size=(5, 3))
    y = rng.integers(0, 3, size=5)
    x_hat = rng.normal(size=(4, 3))
    x_tan = x_hat + 0.1 * rng.normal(size=(4, 3))
    x_norm = x_hat + 0.1 * rng.normal(size=(4, 3))
    weights = StudentLossWeights(w_sup=1.0, w_norm=0.7, w_tan=1.3, w_ent=0.5)

    def build(pvars):
        sup = supervised_energy(student, x, y, pvars=pvars)
        total, _ = unsupervised_energy(student, x_hat, x_tan, x_norm, weights, pvars=pvars)
        return weights.w_sup * sup + total

    return dict(student.entries), build


_CASES = [
    _case_classifier,
    _case_activations,
    _case_exp_log,
    _case_abs_clip_slice,
    _case_softmax_entropy,
    _case_broadcast_mix,
    _case_generator_loss,
    _case_elbo,
    _case_student_energy,
]


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("case", _CASES, ids=lambda c: c.__name__.lstrip("_"))
def test_backprop_matches_finite_differences(case, seed):
    rng = np.random.Generator(np.random.PCG64([seed, _CASES.index(case)]))
    params, build = case(rng)
    analytic, loss_value = backprop_grads(build, params)
    assert np.isfinite(loss_value)

    def loss_fn(p):
        pvars = {k: ad.Var(v) for k, v in p.items()}
        return float(build(pvars).value)

    numeric = finite_difference(loss_fn, {k: v.copy() for k, v in params.items()})
    for name in params:
        err = relative_error(analytic[name], numeric[name], floor=1e-4)
        assert err < 1e-4, f"gradient mismatch for {name}: {err}"


# --- Var / graph basics ------------------------------------------------


def test_leaf_rejects_non_finite_values():
    with pytest.raises(ShapeError):
        ad.Var(np.array([1.0, np.nan]))
    with pytest.raises(ShapeError):
        ad.Var(np.array([np.inf]))


def test_backward_requires_scalar_var():
    v = ad.Var(np.ones(3), requires_grad=True)
    with pytest.raises(GraphError):
        ad.backward(v)
    with pytest.raises(GraphError):
        ad.backward(np.float64(1.0))


def test_matmul_shape_validation():
    with pytest.raises(ShapeError):
        ad.matmul(ad.Var(np.ones((2, 3))), ad.Var(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.matmul(ad.Var(np.ones(3)), ad.Var(np.ones((3, 2))))


def test_broadcast_gradient_reduces_to_leaf_shape():
    a = ad.Var(np.ones((4, 3)), requires_grad=True)
    b = ad.Var(np.ones(3), requires_grad=True)
    loss = ad.vsum(a + b)
    ad.backward(loss)
    assert a.grad.shape == (4, 3)
    assert b.grad.shape == (3,)
    np.testing.assert_allclose(b.grad, 4.0 * np.ones(3))


def test_gradient_accumulates_over_reuse():
    x = ad.Var(np.array(2.0), requires_grad=True)
    loss = ad.mul(x, x) + x  # d/dx = 2x + 1 = 5
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, 5.0)


def test_cross_entropy_label_validation():
    probs = ad.Var(np.full((2, 3), 1.0 / 3.0))
    with pytest.raises(ShapeError):
        ad.cross_entropy(probs, np.array([0, 3]))
    with pytest.raises(ShapeError):
        ad.cross_entropy(probs, np.array([0]))


def test_softmax_rows_partition_of_unity():
    rng = np.random.Generator(np.random.PCG64(7))
    logits = rng.normal(size=(20, 6)) * 5.0
    probs = ad.softmax_rows(ad.Var(logits)).value
    assert np.all(probs > 0)
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(20), atol=1e-12)


# --- architecture / init ----------------------------------------------


def test_validate_architecture_errors():
    with pytest.raises(ConfigurationError):
        validate_architecture([])
    with pytest.raises(ConfigurationError):
        validate_architecture([("dense", 3, 4), ("dense", 5, 2)])
    with pytest.raises(ConfigurationError):
        validate_architecture([("conv", 3)])
    with pytest.raises(ConfigurationError):
        validate_architecture([("dense", 3, 4), ("scale", np.inf)])
    assert validate_architecture([("dense", 3, 4), ("relu",), ("dense", 4, 2)]) == 2


def test_head_boundary_finds_final_dense():
    arch = [("dense", 4, 5), ("relu",), ("dense", 5, 3), ("softmax",)]
    assert head_boundary(arch) == 2
    with pytest.raises(ConfigurationError):
        head_boundary([("relu",)])


def test_xavier_init_bounds_and_determinism():
    arch = [("dense", 30, 20), ("relu",), ("dense", 20, 10), ("softmax",)]
    a = xavier_init(arch, 42)
    b = xavier_init(arch, 42)
    c = xavier_init(arch, 43)
    assert a.equal(b)
    assert not a.equal(c)
    for i, (fan_in, fan_out) in ((0, (30, 20)), (2, (20, 10))):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = a.entries[f"W{i}"]
        assert np.all(np.abs(w) <= bound)
        # a uniform sample this large should fill most of the range
        assert np.abs(w).max() > 0.9 * bound
        assert abs(w.mean()) < 3.0 * bound / np.sqrt(3.0 * w.size)
        np.testing.assert_array_equal(a.entries[f"b{i}"], np.zeros(fan_out))
    assert a.feature_boundary == 2


def test_paramset_validation():
    arch = [("dense", 3, 2), ("softmax",)]
    with pytest.raises(ConfigurationError):
        ParamSet(arch, {"W0": np.zeros((3, 2))})  # missing bias
    with pytest.raises(ShapeError):
        ParamSet(arch, {"W0": np.zeros((2, 3)), "b0": np.zeros(2)})
    with pytest.raises(ConfigurationError):
        ParamSet(arch, {"W0": np.zeros((3, 2)), "b0": np.zeros(2)}, feature_boundary=1)


def test_scale_layer_multiplies_output():
    arch = [("dense", 2, 2), ("tanh",), ("scale", 2.5)]
    entries = {"W0": np.eye(2), "b0": np.zeros(2)}
    net = ParamSet(arch, entries, feature_boundary=None)
    x = np.array([[0.3, -0.2]])
    out = run_layers(net, x)[-1].value
    np.testing.assert_allclose(out, 2.5 * np.tanh(x))


def test_forward_feature_tap_and_errors():
    net = small_classifier(dim=4, hidden=5, classes=3, seed=1)
    x = np.random.Generator(np.random.PCG64(0)).normal(size=(7, 4))
    features, probs = forward(net, x)
    assert features.value.shape == (7, 5)
    assert probs.value.shape == (7, 3)
    gen_like = xavier_init([("dense", 4, 2)], 0, feature_boundary=None)
    with pytest.raises(GraphError):
        forward(gen_like, x[:, :4])
    with pytest.raises(ShapeError):
        run_layers(net, x[:, :2])


# --- optimizers --------------------------------------------------------


def test_adam_first_step_is_signed_lr():
    net = ParamSet([("dense", 2, 2)], {"W0": np.zeros((2, 2)), "b0": np.zeros(2)})
    state = AdamState(net)
    grads = {"W0": np.array([[1.0, -2.0], [3.0, -4.0]]), "b0": np.array([0.5, -0.5])}
    out = adam_update(net, grads, state, lr=0.1)
    # bias-corrected first step reduces to -lr * sign(g) up to eps rounding
    np.testing.assert_allclose(out.entries["W0"], -0.1 * np.sign(grads["W0"]), atol=1e-7)
    np.testing.assert_allclose(out.entries["b0"], -0.1 * np.sign(grads["b0"]), atol=1e-7)
    assert state.t == 1


def test_adam_converges_on_quadratic():
    net = ParamSet([("dense", 1, 1)], {"W0": np.array([[0.0]]), "b0": np.zeros(1)})
    state = AdamState(net)
    for _ in range(600):
        w = net.entries["W0"][0, 0]
        grads = {"W0": np.array([[2.0 * (w - 3.0)]]), "b0": np.zeros(1)}
        net = adam_update(net, grads, state, lr=0.05)
    assert abs(net.entries["W0"][0, 0] - 3.0) < 1e-3


def test_sgd_update_exact():
    net = ParamSet([("dense", 1, 1)], {"W0": np.array([[1.0]]), "b0": np.array([2.0])})
    out = sgd_update(net, {"W0": np.array([[0.5]]), "b0": np.array([1.0])}, lr=0.1)
    np.testing.assert_allclose(out.entries["W0"], [[0.95]])
    np.testing.assert_allclose(out.entries["b0"], [1.9])


def test_update_guards():
    net = ParamSet([("dense", 1, 1)], {"W0": np.array([[1.0]]), "b0": np.zeros(1)})
    with pytest.raises(ShapeError):
        sgd_update(net, {"W0": np.zeros((1, 1))}, lr=0.1)
    with pytest.raises(TrainingError):
        sgd_update(net, {"W0": np.array([[np.inf]]), "b0": np.zeros(1)}, lr=1.0)
    with pytest.raises(ConfigurationError):
        adam_update(net, {"W0": np.zeros((1, 1)), "b0": np.zeros(1)}, AdamState(net), lr=0.0)


def test_decayed_lr_schedules():
    assert decayed_lr(0.1, "constant", 5, 10) == 0.1
    assert decayed_lr(0.1, None, 5, 10) == 0.1
    np.testing.assert_allclose(decayed_lr(0.1, "linear", 5, 10), 0.05)
    np.testing.assert_allclose(decayed_lr(0.1, "linear", 0, 10), 0.1)
    np.testing.assert_allclose(decayed_lr(1.0, "step:40:0.1", 79, 200), 0.1)
    np.testing.assert_allclose(decayed_lr(1.0, "step:40:0.1", 80, 200), 0.01)
    with pytest.raises(ConfigurationError):
        decayed_lr(0.1, "step:0:0.5", 0, 10)
    with pytest.raises(ConfigurationError):
        decayed_lr(0.1, "cosine", 0, 10)


# --- checkpoints -------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = small_classifier(dim=6, hidden=7, classes=4, seed=9)
    path = tmp_path / "model.dgdw"
    write_checkpoint(net, path)
    loaded = read_checkpoint(path)
    assert loaded.architecture == net.architecture
    assert loaded.feature_boundary == net.feature_boundary
    for name in net.entries:
        assert np.array_equal(loaded.entries[name], net.entries[name])


def test_checkpoint_bad_magic_reports_offset(tmp_path):
    path = tmp_path / "bad.dgdw"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError) as err:
        read_checkpoint(path)
    assert err.value.offset == 0


def test_checkpoint_truncation_detected(tmp_path):
    net = small_classifier(seed=3)
    path = tmp_path / "model.dgdw"
    write_checkpoint(net, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 9])
    with pytest.raises(FormatError):
        read_checkpoint(path)


def test_checkpoint_version_check(tmp_path):
    net = small_classifier(seed=3)
    path = tmp_path / "model.dgdw"
    write_checkpoint(net, path)
    data = bytearray(path.read_bytes())
    data[4] = 99  # version field
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        read_checkpoint(path)

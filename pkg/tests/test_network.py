import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_net, random_sequence
from reslstm.cells import CellState, ResidualExtras, plain_step
from reslstm.gradcheck import max_rel_error, numeric_grad, truncated_objective
from reslstm.network import (
    NetworkConfig, StackedNetwork, build_network, forward_sequence, load_checkpoint,
    loss_and_grads, save_checkpoint,
)
from reslstm.numerics import DimensionError


def zero_net(kind="plain", layers=2):
    net = make_net(kind, layers=layers)
    for _, t in net.named_tensors():
        t[...] = 0.0
    return net


def with_identity_matrices(net):
    """Same network with every identity shortcut replaced by an explicit identity matrix."""
    twin = net.copy()
    for layer in twin.layers:
        if layer.kind == "residual" and layer.extras.identity:
            layer.extras = ResidualExtras(np.eye(layer.core.M), layer.extras.scaled)
    return StackedNetwork(twin.config, [type(lp)(lp.kind, lp.core, lp.extras) for lp in twin.layers],
                          twin.W_out, twin.b_out)


@pytest.mark.parametrize("kind", ["plain", "highway", "residual_scaled", "residual_unscaled"])
def test_zero_network(kind):
    net = zero_net(kind, layers=3)
    X, _ = random_sequence(5, 2, 3)
    logits, trace, states = forward_sequence(net, X)
    np.testing.assert_array_equal(logits, 0.0)
    if not kind.startswith("residual"):
        for s in states:
            np.testing.assert_array_equal(s.c, 0.0)
            np.testing.assert_array_equal(s.h, 0.0)


def test_single_layer_single_step_hand_trace():
    net = make_net("plain", layers=1, N=1, K=1, M=1, C=2)
    for _, t in net.named_tensors():
        t[...] = 0.0
    net.layers[0].core.W_p[:] = 1.0
    net.W_out[:] = [[2.0], [-1.0]]
    net.b_out[:] = [0.5, 0.0]
    start = [CellState(np.array([1.0]), np.array([0.0]))]
    logits, _, _ = forward_sequence(net, np.zeros((1, 1)), start)
    h = 0.5 * np.tanh(0.5)
    np.testing.assert_allclose(logits[0], [2 * h + 0.5, -h], rtol=0, atol=1e-15)
    state, _ = plain_step(net.layers[0].core, np.zeros(1), start[0])
    np.testing.assert_array_equal(logits[0], net.W_out @ state.h + net.b_out)


def test_forward_is_deterministic():
    a = make_net("highway", layers=3, seed=4)
    b = make_net("highway", layers=3, seed=4)
    X, _ = random_sequence(7, 2, 3, seed=4)
    la, ta, _ = forward_sequence(a, X)
    lb, tb, _ = forward_sequence(b, X)
    assert la.tobytes() == lb.tobytes()
    for ca, cb in zip(ta.caches, tb.caches):
        for u, v in zip(ca, cb):
            assert u.h.tobytes() == v.h.tobytes() and u.c.tobytes() == v.c.tobytes()


def test_input_dimension_checked():
    net = make_net("plain", K=2)
    with pytest.raises(DimensionError):
        forward_sequence(net, np.zeros((4, 3)))


def test_label_range_checked():
    net = make_net("plain", C=3)
    with pytest.raises(ValueError, match="labels"):
        loss_and_grads(net, np.zeros((2, 2)), [0, 3], 5)


def test_empty_sequence_rejected():
    with pytest.raises(DimensionError):
        loss_and_grads(make_net(), np.zeros((0, 2)), [], 5)


@pytest.mark.parametrize("kind", ["plain", "highway", "residual_scaled", "residual_unscaled"])
def test_truncation_inactive_when_sequence_fits(kind):
    net = make_net(kind, layers=2, seed=2)
    X, y = random_sequence(8, 2, 3, seed=2)
    _, full = loss_and_grads(net, X, y, bptt_len=8)
    _, long = loss_and_grads(net, X, y, bptt_len=50)
    for (name, a), (_, b) in zip(full.named_tensors(), long.named_tensors()):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=0, err_msg=name)


def open_forget_net(kind="plain"):
    net = make_net(kind, layers=1, N=3, K=2, M=2, seed=9)
    net.layers[0].core.b_f[:] = 5.0
    return net


def test_truncation_bites_on_long_memory():
    net = open_forget_net()
    X, y = random_sequence(40, 2, 3, seed=9)
    _, g20 = loss_and_grads(net, X, y, bptt_len=20)
    _, g40 = loss_and_grads(net, X, y, bptt_len=40)
    assert max_rel_error(g20, g40) > 1e-3


@pytest.mark.parametrize("bptt", [20, 40])
def test_truncated_gradients_match_truncated_objective(bptt):
    net = open_forget_net()
    X, y = random_sequence(40, 2, 3, seed=9)
    _, analytic = loss_and_grads(net, X, y, bptt_len=bptt)
    probe = net.astype(np.longdouble)
    numeric = numeric_grad(truncated_objective(probe, X.astype(np.longdouble), y, bptt), probe)
    assert max_rel_error(analytic, numeric) < 1e-6


@pytest.mark.parametrize("kind", ["plain", "highway", "residual_scaled", "residual_unscaled"])
def test_two_layer_truncated_gradcheck(kind):
    net = make_net(kind, layers=2, N=3, K=2, M=3 if kind == "plain" else 2, seed=13)
    X, y = random_sequence(6, 2, 3, seed=13)
    _, analytic = loss_and_grads(net, X, y, bptt_len=3)
    probe = net.astype(np.longdouble)
    numeric = numeric_grad(truncated_objective(probe, X.astype(np.longdouble), y, 3), probe)
    assert max_rel_error(analytic, numeric) < 1e-6


def test_loss_is_mean_frame_cross_entropy():
    net = make_net("residual_scaled", layers=2, seed=3)
    X, y = random_sequence(5, 2, 3, seed=3)
    loss, _ = loss_and_grads(net, X, y, 2)
    logits, _, _ = forward_sequence(net, X)
    ref = np.mean([np.log(np.exp(z).sum()) - z[c] for z, c in zip(logits, y)])
    assert loss == pytest.approx(ref, rel=1e-13)


def test_highway_network_with_closed_depth_gates_matches_plain():
    hw = make_net("highway", layers=4, seed=6)
    for layer in hw.layers[1:]:
        layer.extras.b_d[:] = -40.0
    plain = make_net("plain", layers=4, seed=6)
    for lp, lh in zip(plain.layers, hw.layers):
        for (_, a), (_, b) in zip(lp.named_tensors(), lh.named_tensors()):
            a[...] = b
    plain.W_out[...] = hw.W_out
    X, _ = random_sequence(10, 2, 3, seed=6)
    np.testing.assert_allclose(forward_sequence(hw, X)[0], forward_sequence(plain, X)[0], rtol=0, atol=1e-9)


@pytest.mark.parametrize("kind", ["residual_scaled", "residual_unscaled"])
def test_identity_marker_network_matches_explicit_identity(kind):
    net = make_net(kind, layers=3, seed=7)
    twin = with_identity_matrices(net)
    assert all(not lp.extras.identity for lp in twin.layers)
    X, y = random_sequence(6, 2, 3, seed=7)
    assert forward_sequence(net, X)[0].tobytes() == forward_sequence(twin, X)[0].tobytes()


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["plain", "highway", "residual_scaled", "residual_unscaled"]),
       st.integers(1, 4), st.integers(1, 5), st.integers(1, 4), st.integers(1, 4),
       st.sampled_from(["auto", "matrix"]))
def test_stacking_contract(kind, layers, N, M, D, shortcut):
    if kind.startswith("residual") and N < M:
        N = M
    net = build_network(NetworkConfig(kind, layers, N, M, D, 3, seed=0, shortcut=shortcut))
    widths = [D] + [M] * layers
    for l, layer in enumerate(net.layers):
        assert layer.core.K == widths[l] and layer.core.M == widths[l + 1]
        if kind.startswith("residual"):
            assert layer.extras.identity == (shortcut == "auto" and widths[l] == M)
    logits, _, _ = forward_sequence(net, np.ones((3, D)))
    assert logits.shape == (3, 3)


def test_highway_first_layer_is_plain():
    net = make_net("highway", layers=3)
    assert [lp.kind for lp in net.layers] == ["plain", "highway", "highway"]


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = make_net("residual_scaled", layers=3, K=4, seed=5)
    path = tmp_path / "ck.npz"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.config == net.config
    names = [n for n, _ in net.named_tensors()]
    assert names == [n for n, _ in back.named_tensors()]
    for (_, a), (_, b) in zip(net.named_tensors(), back.named_tensors()):
        assert a.dtype == b.dtype and a.tobytes() == b.tobytes()

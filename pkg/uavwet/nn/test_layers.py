import numpy as np
import pytest

from uavwet.common.errors import CheckpointMismatchError, ShapeError
from uavwet.nn.checkpoint import load_checkpoint, restore, save_checkpoint
from uavwet.nn.layers import (Adam, AttentionBlock, GlobalNet, Mlp, attention_features, clip_grad_norm,
                              local_mlp, sgd_step, soft_update)
from uavwet.nn.tensor import Tensor, numeric_grad
from uavwet.sim.env import similarity_from_xy


def test_local_mlp_has_four_weight_layers():
    net = local_mlp(9, 256, 1, np.random.default_rng(0))
    assert len(net.layers) == 4
    assert [l.W.shape for l in net.layers] == [(9, 256), (256, 256), (256, 256), (256, 1)]
    bound = 1.0 / np.sqrt(9)
    assert np.all(np.abs(net.layers[0].W.data) <= bound)


def test_degenerate_attention_averages_rows():
    m = 4
    blk = AttentionBlock(m, np.random.default_rng(0))
    blk.W_q.data[:] = 0.0
    blk.W_k.data[:] = 0.0
    blk.W_v.data = np.eye(m)
    o = np.random.default_rng(1).normal(size=(3, m))
    z = similarity_from_xy(np.array([[0.0, 0.0], [3.0, 4.0], [9.0, 1.0]]), 100.0).z
    out = attention_features(Tensor(o), z, blk).data
    assert np.allclose(out, o.mean(axis=0) + o, atol=1e-12)


def test_single_agent_attention_doubles_values():
    blk = AttentionBlock(5, np.random.default_rng(2))
    o = np.random.default_rng(3).normal(size=(1, 5))
    out = attention_features(Tensor(o), np.array([[0.0]]), blk).data
    assert np.allclose(out, 2.0 * (o @ blk.W_v.data), atol=1e-12)


def test_attention_is_permutation_equivariant():
    rng = np.random.default_rng(4)
    blk = AttentionBlock(6, rng)
    o = rng.normal(size=(4, 6))
    z = similarity_from_xy(rng.uniform(0, 30, (4, 2)), 100.0).z
    perm = np.array([2, 0, 3, 1])
    base = attention_features(Tensor(o), z, blk).data
    permuted = attention_features(Tensor(o[perm]), z[np.ix_(perm, perm)], blk).data
    assert np.allclose(permuted, base[perm], atol=1e-12)


def test_attention_rejects_mismatched_mask():
    blk = AttentionBlock(3, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        attention_features(Tensor(np.ones((2, 3))), np.ones((3, 3)), blk)


def test_global_net_gradient_through_attention():
    rng = np.random.default_rng(5)
    net = GlobalNet(7, 8, rng, action_dim=3)
    o = rng.normal(size=(4, 2, 7))
    a = rng.uniform(-1, 1, (4, 2, 3))
    z = np.stack([similarity_from_xy(rng.uniform(0, 20, (2, 2)), 100.0).z for _ in range(4)])

    def loss():
        return (net(Tensor(o), z, Tensor(a)) ** 2).mean()

    loss().backward()
    for name, p in net.named_parameters().items():
        orig = p.data.copy()

        def f(v):
            p.data = v
            return loss().item()
        num = numeric_grad(f, orig, eps=1e-6)
        p.data = orig
        assert np.allclose(p.grad, num, rtol=1e-3, atol=1e-8), name


def test_global_net_requires_batched_input():
    net = GlobalNet(3, 4, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        net(Tensor(np.ones((2, 3))), np.ones((2, 2)))


def test_sgd_step_rules():
    net = Mlp([2, 3, 1], np.random.default_rng(0))
    before = [p.data.copy() for p in net.parameters()]
    (net(Tensor(np.ones((4, 2)))) ** 2).mean().backward()
    sgd_step(net.parameters(), 0.0)
    assert all(np.array_equal(b, p.data) for b, p in zip(before, net.parameters()))
    sgd_step(net.parameters(), 0.1)
    for b, p in zip(before, net.parameters()):
        assert np.allclose(p.data, b - 0.1 * p.grad)


def test_soft_update_contracts_toward_online():
    rng = np.random.default_rng(1)
    target, online = Mlp([3, 4, 1], rng), Mlp([3, 4, 1], rng)
    gap = [t.data - o.data for t, o in zip(target.parameters(), online.parameters())]
    soft_update(target, online, 0.999)
    for g, t, o in zip(gap, target.parameters(), online.parameters()):
        assert np.allclose(t.data - o.data, 0.999 * g, atol=1e-15)
    soft_update(target, online, 0.0)
    assert all(np.array_equal(t.data, o.data) for t, o in zip(target.parameters(), online.parameters()))
    with pytest.raises(ValueError):
        soft_update(target, online, 1.0)


def test_clip_grad_norm_scales_down_only():
    net = Mlp([2, 2], np.random.default_rng(0))
    for p in net.parameters():
        p.grad = np.full(p.shape, 10.0)
    total = clip_grad_norm(net.parameters(), 1.0)
    assert total > 1.0
    clipped = np.sqrt(sum(float(np.sum(p.grad ** 2)) for p in net.parameters()))
    assert clipped == pytest.approx(1.0, rel=1e-9)


def test_adam_moves_against_gradient():
    net = Mlp([2, 1], np.random.default_rng(0))
    w = net.layers[0].W
    w.grad = np.ones(w.shape)
    before = w.data.copy()
    Adam([w], lr=0.01).step()
    assert np.allclose(w.data, before - 0.01, atol=1e-6)


def test_checkpoint_round_trip_and_mismatch(tmp_path):
    rng = np.random.default_rng(0)
    net = Mlp([3, 5, 2], rng)
    path = save_checkpoint(tmp_path / "ck.npz", {"net": net}, {"episode": 3})
    arrays, meta = load_checkpoint(path)
    assert meta["episode"] == 3 and meta["format"] == "uavwet-ckpt-v1"
    fresh = Mlp([3, 5, 2], np.random.default_rng(9))
    restore({"net": fresh}, arrays)
    assert all(np.array_equal(a.data, b.data) for a, b in zip(net.parameters(), fresh.parameters()))
    with pytest.raises(CheckpointMismatchError):
        restore({"net": Mlp([3, 6, 2], rng)}, arrays)
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(tmp_path / "missing.npz")

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerworld import agents as ag
from layerworld import comm
from layerworld.info import mi_from_joint


def book(centroids, decode_map=None):
    c = np.asarray(centroids, dtype=np.float64)
    return comm.Codebook(0, c, c.copy() if decode_map is None else np.asarray(decode_map, float))


def test_encode_examples():
    c = np.random.default_rng(0).normal(size=(8, 3))
    assert comm.encode(book(c), c[3]) == 3
    c2 = np.zeros((8, 2))
    c2[:] = 10.0
    c2[1] = [1.0, 0.0]
    c2[4] = [-1.0, 0.0]
    assert comm.encode(book(c2), [0.0, 0.0]) == 1
    two = book([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    assert comm.encode(two, [0.2, 9.9, 0.0]) == 0


def test_decode_examples():
    bank = comm.CodebookBank.init(2, 2, 4, seed=3)
    b = bank.book(1)
    for k in range(4):
        assert np.array_equal(comm.decode(b, comm.encode(b, b.centroids[k])), b.centroids[k])
    assert np.array_equal(comm.decode(b, 0), b.decode_map[0])
    with pytest.raises(IndexError):
        comm.decode(b, 4)
    v = np.random.default_rng(1).normal(size=4)
    assert np.isfinite(np.linalg.norm(v - comm.decode(b, comm.encode(b, v))))


def test_kappa_validation():
    with pytest.raises(ValueError):
        comm.CodebookBank.init(2, 0, 4, seed=0)
    assert comm.CodebookBank.init(1, 3, 2, 0).centroids.shape == (1, 8, 2)


def test_route_empty_topology():
    topo = comm.Topology.empty(3, 2)
    bank = comm.CodebookBank.init(3, 2, 4, 0)
    syms, msgs = comm.route(topo, np.ones((3, 4)), bank)
    assert np.all(syms == -1) and np.all(msgs == 0.0)


def test_route_two_agents():
    topo = comm.Topology.from_edges(2, [(0, 1), (1, 0)])
    bank = comm.CodebookBank.init(2, 2, 3, 0)
    lat = np.random.default_rng(0).normal(size=(2, 3))
    _, msgs = comm.route(topo, lat, bank)
    for i, j in ((0, 1), (1, 0)):
        expected = comm.decode(bank.book(j), comm.encode(bank.book(i), lat[i]))
        assert np.array_equal(msgs[j, 0], expected)


def test_ring_has_one_in_message():
    topo = comm.Topology.ring(3)
    assert topo.n_slots == 1
    assert topo.edges == [(0, 1), (1, 2), (2, 0)]
    _, msgs = comm.route(topo, np.ones((3, 2)), comm.CodebookBank.init(3, 1, 2, 0))
    assert msgs.shape == (3, 1, 2)


def test_grid_topology():
    topo = comm.Topology.grid(3, 3)
    assert topo.slot_sender[4].tolist() == [1, 5, 7, 3]
    assert all(len([e for e in topo.edges if e[1] == j]) == 4 for j in range(9))
    assert topo.reachable(0, 1) == {0, 1, 2, 3, 6}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_routing_ignores_edge_order(seed):
    rng = np.random.default_rng(seed)
    n = 5
    edges = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < 0.5]
    shuffled = [edges[k] for k in rng.permutation(len(edges))]
    a = comm.Topology.from_edges(n, edges)
    b = comm.Topology.from_edges(n, shuffled)
    bank = comm.CodebookBank.init(n, 2, 3, seed)
    lat = rng.normal(size=(n, 3))
    assert np.array_equal(comm.route(a, lat, bank)[1], comm.route(b, lat, bank)[1])


def test_message_frame():
    topo = comm.Topology.ring(3)
    frame = comm.MessageFrame.from_slots(7, topo, np.array([[2], [0], [1]]))
    assert frame.edges == ((0, 1, 0), (1, 2, 1), (2, 0, 2))


def test_channel_mi_examples():
    x = np.random.default_rng(0).integers(0, 4, 10_000)
    assert comm.channel_mi(x, x) == pytest.approx(2.0, abs=0.01)
    y = np.random.default_rng(1).permutation(x)
    assert comm.channel_mi(x, y) <= 0.05
    # the joint table {(0,0): 1/2, (1,1): 1/4, (1,0): 1/4} as exact samples
    src = np.array([0, 0, 1, 1])
    rec = np.array([0, 0, 1, 0])
    assert comm.channel_mi(src, rec) == pytest.approx(mi_from_joint([[0.5, 0], [0.25, 0.25]]), abs=1e-12)
    assert comm.channel_mi(src, rec) == pytest.approx(0.311278, abs=1e-6)
    with pytest.raises(comm.InsufficientSamples):
        comm.channel_mi(src, rec, min_samples=5)


def test_channel_graph_bounded_by_kappa():
    rng = np.random.default_rng(0)
    topo = comm.Topology.full(3)
    bank = comm.CodebookBank.init(3, 2, 4, 0)
    lat = rng.normal(size=(600, 3, 4))
    syms = np.stack([comm.encode_all(bank, l) for l in lat])
    g = comm.channel_graph(5, lat, syms, bank, topo, min_samples=256)
    for i, j in topo.edges:
        assert 0 <= g.gamma[i, j] <= 2 + 1e-12
    assert np.all(np.diag(g.gamma) == 0)


def test_zero_rates_keep_books():
    bank = comm.CodebookBank.init(2, 2, 3, 0)
    lat = np.random.default_rng(0).normal(size=(20, 2, 3))
    out = comm.adapt_codebooks(bank, None, lat, 0.0, 0.0)
    assert np.array_equal(out.centroids, bank.centroids)
    assert np.array_equal(out.decode_map, bank.decode_map)


def kmeans_oracle(x, init, iters=100):
    c = init.copy()
    for _ in range(iters):
        a = np.argmin(((x[:, None] - c[None]) ** 2).sum(-1), axis=1)
        c = np.array([x[a == k].mean(0) if np.any(a == k) else c[k] for k in range(len(c))])
    return c


def test_vq_converges_to_cluster_means():
    rng = np.random.default_rng(0)
    means = np.array([[2.0, 2.0], [-2.0, -2.0]])
    x = np.concatenate([rng.normal(m, 0.2, size=(200, 2)) for m in means])
    bank = comm.CodebookBank(1, np.array([[[0.5, 0.1], [-0.3, -0.4]]]), np.zeros((1, 2, 2)))
    for r in range(100):
        bank = comm.adapt_codebooks(bank, None, x[:, None], 0.2, seed=0, tick=r)
    c = bank.centroids[0]
    oracle = kmeans_oracle(x, np.array([[0.5, 0.1], [-0.3, -0.4]]))
    assert np.abs(c - oracle).max() < 0.1
    assert np.abs(c - means).max() < 0.1


def test_quantization_error_descends():
    rng = np.random.default_rng(2)
    bank = comm.CodebookBank.init(1, 3, 2, 0)
    errs = []
    for r in range(60):
        x = rng.normal(size=(64, 2)) + rng.integers(0, 3, (64, 1)) * 3.0
        errs.append(comm.quantization_error(bank.centroids[0], x))
        bank = comm.adapt_codebooks(bank, None, x[:, None], 0.3, seed=0, tick=r)
    smooth = np.convolve(errs, np.ones(10) / 10, mode="valid")
    assert smooth[-1] <= smooth[0]


def test_empty_cluster_reseeded():
    c = np.array([[0.0, 0.0], [100.0, 100.0]])
    x = np.random.default_rng(0).normal(size=(10, 2))
    out = comm.vq_step(c, x, 0.5, np.random.default_rng(0))
    assert any(np.array_equal(out[1], row) for row in x)


def test_decoder_gradient_against_finite_differences():
    rng = np.random.default_rng(0)
    topo = comm.Topology.ring(2)
    arch = ag.Arch(4, 2, topo.n_slots, latent_dim=3, hidden=4)
    agents = ag.AgentBank.init(arch, [0, 1], 0)
    bank = comm.CodebookBank.init(2, 1, 3, 0)
    views = rng.integers(0, 2, (5, 2, 4)).astype(float)
    slots = rng.integers(-1, 2, (5, 2, 1))
    obs = rng.integers(0, 2, (5, 2, 2)).astype(float)
    grad = comm.decoder_gradient(bank, agents, views, slots, obs)

    def total(dm):
        b = comm.CodebookBank(1, bank.centroids, dm)
        msgs = comm.decode_slots(b, slots)
        inp = ag.AgentInput(np.swapaxes(views, 0, 1), np.swapaxes(msgs, 0, 1))
        return ag.loss(ag.predict(agents, inp), np.swapaxes(obs, 0, 1)).sum()

    h = 1e-6
    for idx in np.ndindex(bank.decode_map.shape):
        e = np.zeros_like(bank.decode_map)
        e[idx] = h
        num = (total(bank.decode_map + e) - total(bank.decode_map - e)) / (2 * h)
        assert num == pytest.approx(grad[idx], abs=1e-7)


def test_curvature_examples():
    rng = np.random.default_rng(0)
    c = rng.normal(size=(4, 3))
    shared = comm.CodebookBank.shared(3, 2, c)
    topo = comm.Topology.ring(3)
    assert comm.curvature(shared, topo, [0, 1, 2], c) == 0.0
    # two agents whose codebooks are permutations of each other: mutually inverse
    perm = np.array([2, 0, 3, 1])
    pair = comm.CodebookBank(2, np.stack([c, c[perm]]), np.stack([c, c[perm]]))
    assert comm.curvature(pair, None, [0, 1], c) == pytest.approx(0.0, abs=1e-15)
    rand = comm.CodebookBank.init(3, 2, 3, seed=5)
    assert comm.curvature(rand, topo, [0, 1, 2], rng.normal(size=(50, 3))) > 0
    with pytest.raises(ValueError):
        comm.curvature(rand, topo, [0, 2, 1], c)


def test_curvature_orthogonal_invariance():
    rng = np.random.default_rng(1)
    bank = comm.CodebookBank.init(3, 2, 4, seed=2)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    rot = comm.CodebookBank(2, bank.centroids @ q, bank.decode_map @ q)
    x = rng.normal(size=(40, 4))
    a = comm.curvature(bank, None, [0, 1, 2], x)
    b = comm.curvature(rot, None, [0, 1, 2], x @ q)
    assert a == pytest.approx(b, rel=1e-9)

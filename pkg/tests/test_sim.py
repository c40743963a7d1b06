import math

import numpy as np
import pytest
import yaml

from dishmac.analytic import MULTI_HOP, SINGLE_HOP
from dishmac.errors import DomainError
from dishmac.sim import (
    CHANNEL_CONFLICT,
    DEAF_TERMINAL,
    MccProblem,
    Simulator,
    Topology,
    find_cooperative_nodes,
    generate_topology,
    measure_ratios,
)
from dishmac.sim.config import build_simulator, scenario_from_mapping
from dishmac.sim.engine import _Handshake
from dishmac.sim.metrics import METRICS_CSV_COLUMNS, SimMetrics


def complete_sets(n):
    return tuple(frozenset(j for j in range(n) if j != i) for i in range(n))


def sets_from_edges(n, edges):
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return tuple(frozenset(s) for s in adj)


COMPLETE5 = complete_sets(5)
LINE5 = sets_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
STAR5 = sets_from_edges(5, [(0, 2), (1, 2), (3, 2), (4, 2)])
NO_04 = sets_from_edges(
    5, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
)

CONFLICT = dict(kind=CHANNEL_CONFLICT, x=0, y=1, x_handshake=100, x_partner=2, y_partner=3)
DEAF = dict(kind=DEAF_TERMINAL, x=0, y=1, x_handshake=100, x_partner=2, y_partner=0)

GOOD = (100, 20.0)

# (label, problem kwargs, neighbor sets, logs, receivers, expected)
WITNESS_CASES = [
    ("happy path", CONFLICT, COMPLETE5, {4: {0: GOOD}}, {4}, {4}),
    ("extra log entries ignored", CONFLICT, COMPLETE5,
     {4: {0: GOOD, 3: (55, 30.0)}}, {4}, {4}),
    ("missed y's message", CONFLICT, COMPLETE5, {4: {0: GOOD}}, set(), set()),
    ("only y's message heard", CONFLICT, COMPLETE5, {4: {}}, {4}, set()),
    ("log names an older handshake", CONFLICT, COMPLETE5, {4: {0: (99, 20.0)}}, {4}, set()),
    ("log entry expired", CONFLICT, COMPLETE5, {4: {0: (100, 9.0)}}, {4}, set()),
    ("log entry expires exactly now", CONFLICT, COMPLETE5, {4: {0: (100, 10.0)}}, {4}, set()),
    ("witness out of x's range", CONFLICT, NO_04, {4: {0: GOOD}}, {4}, set()),
    ("x's partner excluded", CONFLICT, COMPLETE5, {2: {0: GOOD}}, {2}, set()),
    ("y's partner excluded", CONFLICT, COMPLETE5, {3: {0: GOOD}}, {3}, set()),
    ("x itself excluded", CONFLICT, COMPLETE5, {0: {0: GOOD}}, {0}, set()),
    ("y itself excluded", CONFLICT, COMPLETE5, {1: {0: GOOD}}, {1}, set()),
    ("deaf: two witnesses", DEAF, COMPLETE5, {3: {0: GOOD}, 4: {0: GOOD}}, {3, 4}, {3, 4}),
    ("deaf: one of two expired", DEAF, COMPLETE5,
     {3: {0: GOOD}, 4: {0: (100, 9.5)}}, {3, 4}, {3}),
    ("deaf: one of two stale id", DEAF, COMPLETE5,
     {3: {0: (7, 20.0)}, 4: {0: GOOD}}, {3, 4}, {4}),
    ("deaf happy path", DEAF, COMPLETE5, {4: {0: GOOD}}, {4}, {4}),
    ("unknown x partner tolerated", dict(CONFLICT, x_partner=None), COMPLETE5,
     {4: {0: GOOD}}, {4}, {4}),
    ("nothing heard at all", CONFLICT, COMPLETE5, {}, set(), set()),
    ("line: no common neighbor", dict(CONFLICT, x=2, y=3, x_partner=1, y_partner=4),
     LINE5, {4: {2: GOOD}}, {4}, set()),
    ("star: hub is the witness", dict(CONFLICT, x=0, y=1, x_partner=3, y_partner=4),
     STAR5, {2: {0: GOOD}}, {2}, {2}),
]


class TestFindCooperativeNodes:
    @pytest.mark.parametrize(
        "label,problem,nbsets,logs,receivers,expected",
        WITNESS_CASES,
        ids=[c[0] for c in WITNESS_CASES],
    )
    def test_hand_traced_cases(self, label, problem, nbsets, logs, receivers, expected):
        full_logs = [logs.get(i, {}) for i in range(5)]
        got = find_cooperative_nodes(
            MccProblem(**problem), nbsets, full_logs, receivers, now=10.0
        )
        assert got == expected, label

    def test_exhaustive_against_definition_oracle(self):
        # random instances checked against a from-scratch restatement
        rng = np.random.default_rng(77)
        for _ in range(300):
            n = 5
            edges = [
                (a, b)
                for a in range(n)
                for b in range(a + 1, n)
                if rng.uniform() < 0.7
            ]
            nbsets = sets_from_edges(n, edges)
            x, y = rng.choice(n, size=2, replace=False)
            problem = MccProblem(
                kind=CHANNEL_CONFLICT,
                x=int(x),
                y=int(y),
                x_handshake=int(rng.integers(1, 4)),
                x_partner=int(rng.integers(0, n)),
                y_partner=int(rng.integers(0, n)),
            )
            logs = [
                {
                    int(s): (int(rng.integers(1, 4)), float(rng.uniform(5, 15)))
                    for s in rng.choice(n, size=rng.integers(0, n), replace=False)
                }
                for _ in range(n)
            ]
            receivers = {int(v) for v in rng.choice(n, size=rng.integers(0, n), replace=False)}
            receivers &= nbsets[problem.y]
            got = find_cooperative_nodes(problem, nbsets, logs, receivers, now=10.0)

            want = set()
            for v in range(n):
                if v in (problem.x, problem.y, problem.x_partner, problem.y_partner):
                    continue
                if v not in receivers or v not in nbsets[problem.x]:
                    continue
                entry = logs[v].get(problem.x)
                if entry and entry[0] == problem.x_handshake and entry[1] > 10.0:
                    want.add(v)
            assert got == want


def make_sim(nbsets, mode="noncoop", **kwargs):
    n = len(nbsets)
    adjacency = tuple(tuple(sorted(s)) for s in nbsets)
    topo = Topology(
        positions=np.zeros((n, 2)),
        radio_range=250.0,
        adjacency=adjacency,
        mode=MULTI_HOP,
        neighbor_sets=nbsets,
    )
    kwargs.setdefault("stop_after_packets", 10)
    return Simulator(topo, 1.0, 1000.0, mode=mode, seed=1, **kwargs)


def occupy(sim, node_id, partner_id, ch, hid, as_transmitter=True):
    t, r = (node_id, partner_id) if as_transmitter else (partner_id, node_id)
    hs = _Handshake(hid, t, r, ch, (0.0, r), until=sim.now + 0.004)
    node = sim.nodes[node_id]
    node.channel = ch
    node.hs = hs
    return hs


class TestDetectMcc:
    def test_free_channel_no_problem(self):
        sim = make_sim(COMPLETE5)
        hs = _Handshake(1, 0, 1, ch=2, packet=(0.0, 1), until=0.01)
        assert sim.detect_mcc(hs, 0) == []  # McRTS

    def test_deaf_terminal_when_addressee_is_away(self):
        sim = make_sim(COMPLETE5)
        occupy(sim, 1, 3, ch=1, hid=50)
        hs = _Handshake(2, 0, 1, ch=2, packet=(0.0, 1), until=0.01)
        problems = sim.detect_mcc(hs, 0)
        assert [p.kind for p in problems] == [DEAF_TERMINAL]
        assert problems[0].x == 1 and problems[0].y == 0
        assert problems[0].x_handshake == 50 and problems[0].x_partner == 3

    def test_channel_conflict_when_neighbor_occupies_choice(self):
        sim = make_sim(COMPLETE5)
        occupy(sim, 2, 3, ch=2, hid=50)
        hs = _Handshake(2, 0, 1, ch=2, packet=(0.0, 1), until=0.01)
        problems = sim.detect_mcc(hs, 0)
        assert [(p.kind, p.x, p.y) for p in problems] == [(CHANNEL_CONFLICT, 2, 0)]

    def test_deaf_and_conflict_are_separate_problems(self):
        sim = make_sim(COMPLETE5)
        occupy(sim, 1, 3, ch=2, hid=50)  # addressee away on the chosen channel
        hs = _Handshake(2, 0, 1, ch=2, packet=(0.0, 1), until=0.01)
        kinds = sorted(p.kind for p in sim.detect_mcc(hs, 0))
        assert kinds == [CHANNEL_CONFLICT, DEAF_TERMINAL]

    def test_reply_trigger_uses_repliers_neighborhood(self):
        nbsets = sets_from_edges(5, [(0, 1), (1, 2), (0, 3), (3, 4)])
        sim = make_sim(nbsets)
        occupy(sim, 2, 4, ch=1, hid=50)  # node 2 neighbors the replier only
        hs = _Handshake(2, 0, 1, ch=1, packet=(0.0, 1), until=0.01)
        assert sim.detect_mcc(hs, 0) == []  # transmitter 0 cannot see node 2
        problems = sim.detect_mcc(hs, 1)  # McCTS from node 1
        assert [(p.kind, p.x, p.y) for p in problems] == [(CHANNEL_CONFLICT, 2, 1)]

    def test_transmitter_preferred_as_problem_peer(self):
        sim = make_sim(COMPLETE5)
        h = occupy(sim, 2, 3, ch=1, hid=50, as_transmitter=True)
        sim.nodes[3].channel = 1
        sim.nodes[3].hs = h
        hs = _Handshake(2, 0, 1, ch=1, packet=(0.0, 1), until=0.01)
        problems = sim.detect_mcc(hs, 0)
        assert len(problems) == 1
        assert problems[0].x == 2  # both parties in range: name the transmitter


class TestTopology:
    def test_single_hop_complete(self):
        topo = generate_topology(8, seed=1, mode=SINGLE_HOP)
        assert topo.n_nodes == 8
        assert all(topo.degree(i) == 7 for i in range(8))

    def test_seed_determinism(self):
        a = generate_topology(10, seed=5, mode=MULTI_HOP)
        b = generate_topology(10, seed=5, mode=MULTI_HOP)
        assert np.array_equal(a.positions, b.positions)
        assert a.adjacency == b.adjacency

    def test_expected_node_count(self):
        # area/R^2 = 36 cells at the default geometry
        counts = [
            generate_topology(10, seed=s, mode=MULTI_HOP).n_nodes for s in range(30)
        ]
        assert abs(np.mean(counts) - 360) / 360 < 0.05

    def test_connectivity(self):
        topo = generate_topology(10, seed=2, mode=MULTI_HOP)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in topo.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        assert len(seen) == topo.n_nodes

    def test_sparse_density_fails_with_hint(self):
        with pytest.raises(DomainError, match="density"):
            generate_topology(0.05, seed=0, mode=MULTI_HOP, max_retries=5)


@pytest.fixture(scope="module")
def small_run():
    topo = generate_topology(8, seed=1, mode=SINGLE_HOP)
    sim = Simulator(topo, 10.0, 1000.0, mode="noncoop", stop_after_packets=3000, seed=42)
    return sim, sim.run()


class TestEngineInvariants:
    def test_determinism(self, small_run):
        topo = generate_topology(8, seed=1, mode=SINGLE_HOP)
        again = Simulator(
            topo, 10.0, 1000.0, mode="noncoop", stop_after_packets=3000, seed=42
        ).run()
        assert again.to_csv_row() == small_run[1].to_csv_row()

    def test_conservation(self, small_run):
        assert small_run[1].conservation_holds()

    def test_csma_safety(self, small_run):
        assert small_run[1].csma_violations == 0

    def test_sojourn_band(self, small_run):
        sim, metrics = small_run
        assert metrics.sojourn_min >= sim.T_d - sim.b
        assert metrics.sojourn_max <= sim.T_d + sim.b

    def test_termination_on_packet_count(self, small_run):
        assert small_run[1].data_packets_sent == 3000

    def test_zero_load(self):
        topo = generate_topology(6, seed=1, mode=SINGLE_HOP)
        m = Simulator(topo, 0.0, 1000.0, stop_after_packets=10, seed=1).run()
        assert m.p_co_hat is None
        assert m.packets_arrived == 0
        assert m.sim_time == 0.0
        assert m.throughput is None

    def test_collision_ground_truth(self):
        # every data transmission that starts over an already-audible
        # same-channel neighbor transmission must be counted as collided
        outcomes = {}

        class Probe(Simulator):
            def _start_tx(self, node, mtype, duration, hs, nav=0.0):
                tx = super()._start_tx(node, mtype, duration, hs, nav)
                if mtype == 7:  # DATA
                    r = self.nodes[hs.r]
                    interferers = [
                        t
                        for t in self.active.values()
                        if t.channel == tx.channel
                        and t.txid != tx.txid
                        and t.sender in r.nbset
                    ]
                    outcomes[tx.txid] = (hs, bool(interferers))
                return tx

            def _finish_data(self, tx, clean):
                hs, dirty_at_start = outcomes[tx.txid]
                if dirty_at_start:
                    assert hs.r not in clean
                super()._finish_data(tx, clean)

        topo = generate_topology(8, seed=3, mode=SINGLE_HOP)
        sim = Probe(
            topo, 16.0, 1000.0, mode="noncoop", stop_after_packets=4000, seed=9
        )
        metrics = sim.run()
        assert metrics.data_collisions > 0
        assert any(flag for _, flag in outcomes.values())

    def test_single_shared_channel_defers_instead_of_colliding(self):
        # fully connected with one data channel: usage tables are complete,
        # so contenders wait for the booked slot rather than conflict
        topo = generate_topology(6, seed=3, mode=SINGLE_HOP)
        m = Simulator(
            topo, 14.0, 1000.0, mode="noncoop", data_channels=1,
            stop_after_packets=2500, seed=9,
        ).run()
        assert m.mcc_channel_conflict == 0
        assert m.data_collisions == 0


class TestModes:
    def test_ideal_reduces_collisions(self):
        topo = generate_topology(6, seed=4, mode=MULTI_HOP)
        base = Simulator(
            topo, 8.0, 1000.0, mode="noncoop", stop_after_packets=5000, seed=11
        ).run()
        coop = Simulator(
            topo, 8.0, 1000.0, mode="ideal", stop_after_packets=5000, seed=11
        ).run()
        assert base.collision_rate is not None and coop.collision_rate is not None
        assert coop.collision_rate < base.collision_rate
        assert coop.coop_msgs_sent == 0  # informed at zero airtime

    def test_real_mode_sends_coop_messages(self):
        topo = generate_topology(8, seed=2, mode=SINGLE_HOP)
        m = Simulator(
            topo, 12.0, 1000.0, mode="real", stop_after_packets=4000, seed=11
        ).run()
        assert m.coop_msgs_sent > 0
        assert m.mcc_created > 0
        assert m.mcc_with_coop > 0

    def test_real_handshake_duration_matches_base_protocol(self):
        # without any problem the split setup occupies exactly the same time
        enters = {}
        for mode in ("noncoop", "real"):
            topo = generate_topology(2, seed=1, mode=SINGLE_HOP)
            sim = Simulator(
                topo, 5.0, 1000.0, mode=mode, stop_after_packets=1,
                seed=3, trace=True,
            )
            sim.run()
            enters[mode] = [
                t for t, _n, kind, _ch, d in sim.trace
                if kind == "ChannelSwitch" and d == "enter"
            ]
        assert enters["noncoop"] == pytest.approx(enters["real"], abs=1e-12)

    def test_problem_tally_is_mode_independent_in_quiet_network(self):
        # two nodes: no third party, so no witnesses and no mode actions
        for mode in ("noncoop", "ideal", "real"):
            topo = generate_topology(2, seed=1, mode=SINGLE_HOP)
            m = Simulator(
                topo, 5.0, 1000.0, mode=mode, stop_after_packets=200, seed=3
            ).run()
            assert m.mcc_with_coop == 0
            if m.mcc_created:
                assert m.p_co_hat == 0.0


class TestMetrics:
    def test_identical_runs_give_unit_ratios(self, small_run):
        _, m = small_run
        ratios = measure_ratios(m, m)
        assert ratios.eta_xi == pytest.approx(1.0)
        assert ratios.eta_delta == pytest.approx(1.0)
        assert ratios.eta_s == pytest.approx(1.0)

    def test_zero_base_gives_absent_ratio(self):
        a = SimMetrics()
        b = SimMetrics()
        ratios = measure_ratios(a, b)
        assert ratios.eta_xi is None
        assert ratios.eta_delta is None
        assert ratios.eta_s is None

    def test_csv_row_matches_column_order(self, small_run):
        row = small_run[1].to_csv_row()
        assert len(row) == len(METRICS_CSV_COLUMNS)


class TestScenarioConfig:
    def test_roundtrip_mapping(self):
        cfg = scenario_from_mapping(
            {
                "topology": {"mode": "single_hop", "n": 8},
                "traffic": {"lambda": 10.0, "packet_bytes": 1000},
                "channels": {"data_channels": 5, "data_rate": 1e6},
                "mode": "noncoop",
                "seed": 7,
                "stop": {"packets": 500},
            }
        )
        assert cfg.topology_mode == "single_hop"
        assert cfg.stop_packets == 500
        sim = build_simulator(cfg)
        assert sim.topo.n_nodes == 8
        assert sim.seed == 7

    def test_unknown_keys_rejected(self):
        with pytest.raises(DomainError, match="unknown keys"):
            scenario_from_mapping({"trafic": {}})
        with pytest.raises(DomainError, match="unknown keys"):
            scenario_from_mapping({"traffic": {"lambda": 1.0, "bytes": 3}})

    def test_yaml_file_loads(self, tmp_path):
        path = tmp_path / "scenario.yaml"
        path.write_text(
            yaml.safe_dump(
                {
                    "topology": {"mode": "single_hop", "n": 4},
                    "traffic": {"lambda": 2.0, "packet_bytes": 500},
                    "mode": "ideal",
                    "seed": 3,
                    "stop": {"packets": 50},
                }
            )
        )
        from dishmac.sim import load_scenario

        cfg = load_scenario(path)
        assert cfg.mode == "ideal"
        assert cfg.packet_bytes == 500.0

import csv
import math

import numpy as np

from hetcon.consensus import (
    HeterogeneityProfile,
    Network,
    certify,
    heterogeneity_profile,
)
from hetcon.graph import build_graph, flip_edge, lambda2
from hetcon.lti import RationalFunction
from hetcon.netsim import (
    BoundCheckError,
    ClosedLoopError,
    NormRangeError,
    SimulationError,
    assemble_closed_loop,
    simulate,
    simulate_batch,
    truncated_norm,
    verify_bound,
    write_trace_csv,
)
from hetcon.netsim.signal import (
    ExpDecay,
    Pulse,
    SignalError,
    SignalSpec,
    Sine,
    Step,
    make_signal,
    primitive_from_dict,
    random_pulse_inputs,
)
from hetcon.passivity import ofp_index

import pytest


def lag(a):
    return RationalFunction([1.0], [a, 1.0])


def pair_network(weight=1.0, nodes=None):
    g = build_graph(2, [(1, 2, weight)])
    return Network(graph=g, nodes=nodes or (lag(1.0), lag(1.0)))


def ring_network(constants, weight):
    n = len(constants)
    g = build_graph(n, [(k, k % n + 1, weight) for k in range(1, n + 1)])
    return Network(graph=g, nodes=tuple(lag(a) for a in constants))


def step(amplitude, start=0.0):
    return SignalSpec(primitives=(Step(amplitude=amplitude, start=start),))


ZERO = SignalSpec()


@pytest.fixture(scope="module")
def heterogeneous_ring():
    net = ring_network([0.8, 1.0, 1.2, 1.5, 0.9], 300.0)
    cert = certify(net, heterogeneity_profile(net))
    assert cert.certified
    return net, cert


# lightly damped, OFP index close to -1
RESONANT = RationalFunction([2.0, 1.0], [4.0, 1.0, 1.0])


@pytest.fixture(scope="module")
def resonant_ring():
    """Ring of lags with one node that is not passive.

    The common edge weight is 1.25 times the smallest one certifying the
    ring, so that gamma_m + alpha lambda2 > 0 with a finite margin.
    """
    nodes = (lag(0.8), RESONANT, lag(0.9), lag(1.5), lag(1.2))
    unit = Network(graph=ring_network([1.0] * 5, 1.0).graph, nodes=nodes)
    gaps = heterogeneity_profile(unit).gaps
    gamma_m = min(gap.lower_bound for gap in gaps.values())
    weight = -1.25 * gamma_m / lambda2(unit.graph)
    # keeps the fastest closed-loop mode inside the RK4 region at dt = 1e-3
    assert weight < 700.0

    net = Network(graph=ring_network([1.0] * 5, weight).graph, nodes=nodes)
    profile = HeterogeneityProfile(
        gaps=gaps, gamma_m=gamma_m, alpha_min=weight, alpha_bar=weight
    )
    return net, certify(net, profile)


def test_step():
    s = Step(amplitude=2.0, start=1.0)
    assert s(1.0) == 2.0
    assert s.left_limit(1.0) == 0.0
    assert s(0.5) == 0.0
    assert not s.finite_energy
    assert Step(amplitude=0.0).finite_energy


def test_pulse():
    p = Pulse(amplitude=1.5, start=1.0, stop=2.0)
    assert np.array_equal(p([0.5, 1.0, 1.5, 2.0]), [0.0, 1.5, 1.5, 0.0])
    assert np.array_equal(p.left_limit([1.0, 2.0]), [0.0, 1.5])
    assert p.finite_energy
    with pytest.raises(SignalError):
        Pulse(amplitude=1.0, start=2.0, stop=2.0)


def test_snapping(caplog):
    p = Pulse(amplitude=1.0, start=0.10004, stop=0.2499).snapped(0.01)
    assert p.start == pytest.approx(0.10)
    assert p.stop == pytest.approx(0.25)
    narrow = Pulse(amplitude=1.0, start=0.1, stop=0.1001).snapped(0.01)
    assert narrow.stop - narrow.start == pytest.approx(0.01)
    assert "widened" in caplog.text


def test_decaying():
    assert Sine(amplitude=1.0, frequency=2.0, decay=0.5).finite_energy
    assert not Sine(amplitude=1.0, frequency=2.0).finite_energy
    assert ExpDecay(amplitude=3.0, rate=2.0)(0.0) == 3.0
    assert ExpDecay(amplitude=3.0, rate=2.0)(-1.0) == 0.0
    with pytest.raises(SignalError):
        Sine(amplitude=1.0, frequency=1.0, decay=-1.0)
    with pytest.raises(SignalError):
        ExpDecay(amplitude=1.0, rate=-0.1)


def test_from_dict():
    spec = SignalSpec.from_list(
        [
            {"type": "pulse", "amplitude": 1.0, "start": 0.0, "stop": 1.0},
            {"type": "exp_decay", "amplitude": 2.0, "rate": 1.0},
        ]
    )
    assert spec(0.0) == pytest.approx(3.0)
    assert spec.finite_energy
    assert spec.to_list()[0]["type"] == "pulse"
    assert spec.scaled(2.0)(0.0) == pytest.approx(6.0)

    with pytest.raises(SignalError) as err:
        primitive_from_dict({"type": "ramp"})
    assert "unknown signal type 'ramp'" in str(err.value)
    with pytest.raises(SignalError):
        primitive_from_dict({"type": "step", "slope": 1.0})


def test_make_signal():
    assert make_signal(step(1.0)) == step(1.0)
    with pytest.raises(SignalError):
        make_signal(step(math.inf))


def test_signal_random_pulses():
    first = random_pulse_inputs(4, np.random.default_rng(3), horizon=5.0)
    second = random_pulse_inputs(4, np.random.default_rng(3), horizon=5.0)
    assert first == second
    assert len(first) == 4
    for spec in first:
        assert spec.finite_energy
        assert len(spec.primitives) == 3
        for p in spec.primitives:
            assert 0.0 <= p.start < p.stop <= 5.0
            assert abs(p.amplitude) <= 1.0


def test_assembly():
    cls = assemble_closed_loop(pair_network())
    assert cls.n == 2
    assert cls.n_states == 2
    assert np.allclose(cls.K, [[1.0, -1.0], [-1.0, 1.0]])
    assert np.allclose(cls.A_cl, [[-2.0, 1.0], [1.0, -2.0]])
    assert np.allclose(cls.B_cl, np.eye(2))


def test_ill_posed():
    # feedthrough -1/2 on both nodes makes I + K D_ft singular
    h = RationalFunction([0.0, -0.5], [1.0, 1.0])
    with pytest.raises(ClosedLoopError):
        assemble_closed_loop(pair_network(nodes=(h, h)))


def test_feedthrough():
    h = RationalFunction([2.0, 1.0], [1.0, 1.0])
    cls = assemble_closed_loop(pair_network(nodes=(h, lag(1.0))))
    trace = simulate(cls, [step(1.0), ZERO], dt=0.01, t_end=1.0)
    assert np.allclose(trace.u, trace.w - trace.y @ cls.K.T, atol=1e-12)


def test_step_response():
    cls = assemble_closed_loop(pair_network())
    errors = []
    for dt in (0.02, 0.01):
        trace = simulate(cls, [step(1.0), ZERO], dt=dt, t_end=2.0)
        t = trace.t
        total = 1.0 - np.exp(-t)
        diff = (1.0 - np.exp(-3.0 * t)) / 3.0
        expected = np.column_stack([(total + diff) / 2.0, (total - diff) / 2.0])
        errors.append(float(np.max(np.abs(trace.y - expected))))
    assert errors[1] < 1e-8
    assert math.log2(errors[0] / errors[1]) >= 3.5


def test_single_node_step_response():
    single = Network(graph=build_graph(1, []), nodes=(lag(1.0),))
    trace = simulate(assemble_closed_loop(single), [step(1.0)], dt=1e-3, t_end=1.0)
    assert trace.y[-1, 0] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-12)
    assert trace.dty.shape == (1001, 0)

    # a pole at -50 keeps the truncation error at dt = 2e-3 and 1e-3 well
    # above roundoff, unlike the pole at -1
    fast = Network(graph=build_graph(1, []), nodes=(lag(50.0),))
    cls = assemble_closed_loop(fast)
    errors = []
    for dt in (2e-3, 1e-3):
        trace = simulate(cls, [step(1.0)], dt=dt, t_end=1.0)
        expected = (1.0 - np.exp(-50.0 * trace.t)) / 50.0
        errors.append(float(np.max(np.abs(trace.y[:, 0] - expected))))
    assert errors[1] < 1e-8
    assert math.log2(errors[0] / errors[1]) >= 3.5


def test_linearity():
    net = ring_network([1.0, 2.0, 3.0], 2.0)
    cls = assemble_closed_loop(net)
    first = [SignalSpec((Pulse(amplitude=1.0, start=0.2, stop=1.0),)), ZERO, ZERO]
    second = [
        ZERO,
        SignalSpec((Sine(amplitude=1.0, frequency=3.0, decay=0.5),)),
        SignalSpec((ExpDecay(amplitude=-2.0, rate=1.0),)),
    ]
    a, b = 2.5, -0.75
    combined = [
        SignalSpec(u.scaled(a).primitives + v.scaled(b).primitives)
        for u, v in zip(first, second)
    ]
    y1 = simulate(cls, first, dt=1e-2, t_end=4.0).y
    y2 = simulate(cls, second, dt=1e-2, t_end=4.0).y
    y = simulate(cls, combined, dt=1e-2, t_end=4.0).y
    assert np.allclose(y, a * y1 + b * y2, atol=1e-12)


def test_grid():
    cls = assemble_closed_loop(pair_network())
    trace = simulate(cls, [step(1.0), ZERO], dt=0.1, t_end=1.0)
    assert len(trace.t) == 11
    assert trace.t[-1] == pytest.approx(1.0)
    assert trace.norm_dty[0] == trace.norm_dtw[0] == 0.0
    assert np.all(np.diff(trace.norm_dty) >= 0)
    assert math.isnan(trace.ratio[0])


def test_invalid_settings():
    cls = assemble_closed_loop(pair_network())
    with pytest.raises(SimulationError):
        simulate(cls, [ZERO, ZERO], dt=0.0, t_end=1.0)
    with pytest.raises(SimulationError):
        simulate(cls, [ZERO], dt=0.1, t_end=1.0)
    with pytest.raises(SignalError):
        simulate(cls, [step(1.0), ZERO], dt=0.1, t_end=1.0, enforce_l2=True)


def test_initial_state():
    cls = assemble_closed_loop(pair_network())
    with pytest.raises(SimulationError) as err:
        simulate(cls, [ZERO, ZERO], dt=0.1, t_end=1.0, x0=[1.0, 0.0])
    assert "exploratory" in str(err.value)
    with pytest.raises(SimulationError):
        simulate(cls, [ZERO, ZERO], dt=0.1, t_end=1.0, x0=[1.0], exploratory=True)

    trace = simulate(
        cls, [ZERO, ZERO], dt=0.01, t_end=1.0, x0=[1.0, 0.0], exploratory=True
    )
    assert not trace.zero_initial_state
    assert trace.y[0, 0] == 1.0
    # the difference mode decays as exp(-3t)
    assert trace.dty[-1, 0] == pytest.approx(math.exp(-3.0), rel=1e-6)

    zero = simulate(cls, [ZERO, ZERO], dt=0.1, t_end=1.0, x0=[0.0, 0.0])
    assert zero.zero_initial_state


def test_divergence():
    unstable = RationalFunction([1.0], [-5.0, 1.0])
    cls = assemble_closed_loop(pair_network(0.1, nodes=(unstable, unstable)))
    with pytest.raises(SimulationError) as err:
        simulate(cls, [step(1.0), ZERO], dt=0.01, t_end=10.0)
    assert err.value.time is not None
    assert 4.0 < err.value.time < 10.0


def test_batch():
    cls = assemble_closed_loop(pair_network())
    rng = np.random.default_rng(11)
    inputs = [random_pulse_inputs(2, rng) for _ in range(4)]
    sequential = simulate_batch(cls, inputs, dt=0.01, t_end=5.0)
    parallel = simulate_batch(cls, inputs, dt=0.01, t_end=5.0, jobs=3)
    for a, b in zip(sequential, parallel):
        assert np.array_equal(a.y, b.y)


def test_edge_orientation_and_labels():
    net = ring_network([1.0, 2.0, 3.0], 2.0)
    pulse = SignalSpec((Pulse(amplitude=-1.0, start=0.5, stop=1.5),))
    inputs = [step(1.0), pulse, ZERO]
    reference = simulate(assemble_closed_loop(net), inputs, dt=0.01, t_end=3.0)

    flipped = Network(graph=flip_edge(net.graph, 1), nodes=net.nodes)
    trace = simulate(assemble_closed_loop(flipped), inputs, dt=0.01, t_end=3.0)
    assert np.allclose(trace.y, reference.y, atol=1e-12)
    assert np.allclose(trace.norm_dty, reference.norm_dty, atol=1e-12)

    perm = {1: 2, 2: 3, 3: 1}
    relabeled = net.relabel(perm)
    moved = [None] * 3
    for old, new in perm.items():
        moved[new - 1] = inputs[old - 1]
    trace = simulate(assemble_closed_loop(relabeled), moved, dt=0.01, t_end=3.0)
    for old, new in perm.items():
        assert np.allclose(trace.y[:, new - 1], reference.y[:, old - 1], atol=1e-12)


def test_truncated_norm():
    samples = np.ones(21)
    assert truncated_norm(samples, 0.1, 2.0) == pytest.approx(math.sqrt(2.0))
    assert truncated_norm(samples, 0.1, 0.0) == 0.0
    vector = np.ones((21, 2))
    assert truncated_norm(vector, 0.1, 1.0) == pytest.approx(math.sqrt(2.0))


def test_range():
    samples = np.ones(21)
    with pytest.raises(NormRangeError):
        truncated_norm(samples, 0.1, 2.1)
    with pytest.raises(NormRangeError):
        truncated_norm(samples, 0.1, 0.15)


def test_matches_trace():
    cls = assemble_closed_loop(pair_network())
    trace = simulate(cls, [step(1.0), ZERO], dt=0.01, t_end=1.0)
    assert truncated_norm(trace.dty, 0.01, 1.0) == pytest.approx(trace.norm_dty[-1])


def test_bound_random_pulses(heterogeneous_ring):
    net, cert = heterogeneous_ring
    cls = assemble_closed_loop(net)
    rng = np.random.default_rng(0)
    inputs = [random_pulse_inputs(5, rng, horizon=5.0) for _ in range(3)]
    for trace in simulate_batch(cls, inputs, dt=1e-3, t_end=8.0, enforce_l2=True):
        report = verify_bound(trace, cert)
        assert report.passed
        assert not report.inconclusive
        assert report.max_ratio <= cert.rho * (1 + report.ratio_slack)
        assert report.to_dict()["pass"] is True


def test_bound_scaled_inputs(heterogeneous_ring):
    net, cert = heterogeneous_ring
    cls = assemble_closed_loop(net)
    inputs = random_pulse_inputs(5, np.random.default_rng(4), horizon=3.0)
    reference = verify_bound(simulate(cls, inputs, dt=1e-3, t_end=4.0), cert)
    scaled = [spec.scaled(-3.5) for spec in inputs]
    report = verify_bound(simulate(cls, scaled, dt=1e-3, t_end=4.0), cert)
    assert report.max_ratio == pytest.approx(reference.max_ratio, rel=1e-9)
    assert report.passed == reference.passed


def test_bound_relabel_and_flip(heterogeneous_ring):
    net, cert = heterogeneous_ring
    inputs = random_pulse_inputs(5, np.random.default_rng(5), horizon=3.0)
    trace = simulate(assemble_closed_loop(net), inputs, dt=1e-3, t_end=4.0)
    reference = verify_bound(trace, cert)

    perm = {1: 4, 2: 1, 3: 5, 4: 2, 5: 3}
    relabeled = net.relabel(perm)
    moved = Network(
        graph=flip_edge(flip_edge(relabeled.graph, 0), 3), nodes=relabeled.nodes
    )
    moved_inputs = [ZERO] * 5
    for old, new in perm.items():
        moved_inputs[new - 1] = inputs[old - 1]
    moved_cert = certify(moved, heterogeneity_profile(moved))
    assert moved_cert.lambda2 == pytest.approx(cert.lambda2, abs=1e-9)
    assert moved_cert.certified == cert.certified

    trace = simulate(assemble_closed_loop(moved), moved_inputs, dt=1e-3, t_end=4.0)
    report = verify_bound(trace, moved_cert)
    assert report.max_ratio == pytest.approx(reference.max_ratio, rel=1e-9)
    assert report.passed == reference.passed


def test_non_passive_node_certificate(resonant_ring):
    net, cert = resonant_ring
    assert ofp_index(RESONANT).gamma_star < 0.0
    assert cert.gamma_m < 0.0
    assert cert.condition_value == pytest.approx(
        cert.gamma_m + cert.alpha_min * cert.lambda2
    )
    assert cert.condition_value > 0.0
    assert cert.certified
    assert cert.rho > 0.0


def test_non_passive_node_bound(resonant_ring):
    net, cert = resonant_ring
    cls = assemble_closed_loop(net)
    rng = np.random.default_rng(2)
    inputs = [random_pulse_inputs(5, rng, horizon=5.0) for _ in range(3)]
    for trace in simulate_batch(cls, inputs, dt=1e-3, t_end=8.0, enforce_l2=True):
        report = verify_bound(trace, cert)
        assert not report.inconclusive
        assert report.max_ratio <= cert.rho * (1 + report.ratio_slack)
        assert report.passed


@pytest.mark.slow
def test_non_passive_node_bound_long(resonant_ring):
    net, cert = resonant_ring
    cls = assemble_closed_loop(net)
    rng = np.random.default_rng(1)
    inputs = [random_pulse_inputs(5, rng) for _ in range(20)]
    traces = simulate_batch(cls, inputs, dt=1e-3, t_end=30.0, jobs=4)
    reports = [verify_bound(trace, cert) for trace in traces]
    assert all(report.passed for report in reports)
    assert max(report.max_ratio for report in reports) <= cert.rho * 1.01


def test_homogeneous_consensus_input():
    net = ring_network([1.0] * 4, 1.0)
    cert = certify(net, heterogeneity_profile(net))
    common = SignalSpec((Pulse(amplitude=1.0, start=0.0, stop=1.0),))
    trace = simulate(assemble_closed_loop(net), [common] * 4, dt=0.01, t_end=3.0)
    report = verify_bound(trace, cert)
    assert report.inconclusive
    assert report.max_ratio is None
    assert report.sup_dty < 1e-6
    assert report.passed


def test_heterogeneous_consensus_input(heterogeneous_ring):
    net, cert = heterogeneous_ring
    common = SignalSpec((Pulse(amplitude=1.0, start=0.0, stop=1.0),))
    trace = simulate(assemble_closed_loop(net), [common] * 5, dt=1e-3, t_end=3.0)
    report = verify_bound(trace, cert)
    assert report.inconclusive
    # different nodes answer a common input differently
    assert report.sup_dty > 1e-6
    assert not report.passed


def test_refused(heterogeneous_ring):
    net, cert = heterogeneous_ring
    cls = assemble_closed_loop(net)
    x0 = np.zeros(cls.n_states)
    x0[0] = 1.0
    trace = simulate(cls, [ZERO] * 5, dt=1e-3, t_end=0.1, x0=x0, exploratory=True)
    with pytest.raises(BoundCheckError):
        verify_bound(trace, cert)

    trace = simulate(cls, [step(1.0)] + [ZERO] * 4, dt=1e-3, t_end=0.1)
    with pytest.raises(BoundCheckError):
        verify_bound(trace, cert)

    pair = pair_network()
    profile = HeterogeneityProfile(
        gaps={}, gamma_m=-10.0, alpha_min=1.0, alpha_bar=1.0
    )
    uncertified = certify(pair, profile)
    trace = simulate(assemble_closed_loop(pair), [ZERO, ZERO], dt=0.1, t_end=1.0)
    with pytest.raises(BoundCheckError):
        verify_bound(trace, uncertified)


def test_write_trace(tmp_path):
    cls = assemble_closed_loop(pair_network())
    trace = simulate(cls, [step(1.0), ZERO], dt=0.1, t_end=0.5)
    path = str(tmp_path / "trace.csv")
    write_trace_csv(path, trace)
    with open(path) as fd:
        rows = list(csv.reader(fd))
    assert rows[0] == [
        "t", "w_1", "w_2", "u_1", "u_2", "y_1", "y_2", "norm_DtY", "norm_DtW", "ratio"
    ]
    assert len(rows) == 7
    assert rows[1][-1] == ""
    assert float(rows[-1][0]) == pytest.approx(0.5)
    assert float(rows[-1][-1]) == pytest.approx(trace.ratio[-1])

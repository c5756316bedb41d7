import numpy as np
import pytest

from hybridsizer import kernels
from hybridsizer._kernels_py import reference_step
from hybridsizer.dispatch import ActivationOutcome
from hybridsizer.plant import DesignVector, PlantParams, PlantState, SocBoundError
from hybridsizer.policy_opt import init_policy
from hybridsizer.serial_bidding import AgentAction, PvForecast
from hybridsizer.settlement import PriceQuote

HAVE_CY = "cython" in kernels.available_backends()
MODES = (kernels.MODE_HYBRID, kernels.MODE_COLOCATED)


def random_batch(n, seed, params=PlantParams()):
    rng = np.random.default_rng(seed)
    designs = np.column_stack([rng.uniform(0, 15, n), rng.uniform(0, 40, n), rng.uniform(0, 10, n)])
    designs[rng.random(n) < 0.1, 1:] = 0.0
    return dict(
        soc=rng.uniform(params.S_min, params.S_max, n),
        actions=rng.uniform(-0.2, 1.2, (n, 5)),
        p_pred=rng.uniform(0, 14, n),
        p_avail=rng.uniform(0, 14, n),
        prices=np.column_stack([rng.uniform(-20, 150, n), rng.uniform(0, 10, (n, 3))]),
        activations=rng.uniform(0, 1, (n, 3)) * np.array([params.H_res, params.H_up, params.H_dn]),
        designs=designs,
    )


def run_batch(b, params, mode, backend=None):
    return kernels.step_batch(b["soc"], b["actions"], b["p_pred"], b["p_avail"], b["prices"], b["activations"],
                              b["designs"], kernels.params_vector(params), mode, backend_name=backend)


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("params", [PlantParams(), PlantParams(P_poi_min=-5.0, P_inv=8.0, pi_imb=0.5)])
def test_step_batch_matches_scalar_reference(mode, params):
    b = random_batch(400, 1, params)
    out = run_batch(b, params, mode, "python")
    for i in range(len(b["soc"])):
        d = DesignVector(*b["designs"][i])
        pr = b["prices"][i]
        _, bids, rec, st = reference_step(
            PlantState(b["soc"][i]), AgentAction.from_array(b["actions"][i]), PvForecast(b["p_pred"][i]),
            b["p_avail"][i], PriceQuote(*pr, pi_imb=params.pi_imb), ActivationOutcome(*b["activations"][i]),
            d, params, mode)
        row = out[i]
        C = kernels.COL
        for name, v in (("b_e", bids.b_e), ("b_res", bids.b_res), ("b_up", bids.b_up), ("b_dn", bids.b_dn),
                        ("b_dn_bat", bids.b_dn_bat), ("x_chgE", rec.x_chgE), ("x_disE", rec.x_disE),
                        ("x_chgAS", rec.x_chgAS), ("x_disAS", rec.x_disAS), ("x_cur", rec.x_cur),
                        ("delta_E", rec.delta_E), ("soc_next", rec.soc_after), ("reward", st.reward)):
            assert row[C[name]] == pytest.approx(v, abs=1e-9, rel=1e-12), (i, name)
        assert row[C["fault"]] == 0.0


@pytest.mark.skipif(not HAVE_CY, reason="compiled extension not built")
@pytest.mark.parametrize("mode", MODES)
def test_backends_identical_on_step_batch(mode):
    params = PlantParams(P_poi_min=-2.0)
    b = random_batch(5000, 7, params)
    a = run_batch(b, params, mode, "python")
    c = run_batch(b, params, mode, "cython")
    assert np.array_equal(a, c)


@pytest.mark.skipif(not HAVE_CY, reason="compiled extension not built")
@pytest.mark.parametrize("mode", MODES)
def test_backends_identical_on_rollout(mode):
    params = PlantParams()
    rng = np.random.default_rng(3)
    T = 48
    pol = init_policy(seed=5)
    w, sizes, mean, std = pol.kernel_args()
    p_avail = np.clip(rng.normal(5, 4, T + 1), 0, None)
    p_pred = np.clip(rng.normal(5, 4, T), 0, None)
    prices = np.column_stack([rng.uniform(0, 100, T + 1), rng.uniform(0, 8, (T + 1, 3))])
    act = rng.uniform(0, 1, (T, 3)) * np.array([0.5, 0.35, 0.35])
    args = (w, sizes, mean, std, p_avail, p_pred, prices, act, np.array([11.0, 20.0, 5.0]),
            kernels.params_vector(params), 0.5, mode)
    ta, oa = kernels.rollout_mlp(*args, backend_name="python")
    tc, oc = kernels.rollout_mlp(*args, backend_name="cython")
    assert np.array_equal(ta, tc)
    assert np.array_equal(oa, oc)


def test_rollout_chains_soc_and_fills_observations():
    params = PlantParams()
    T = 10
    pol = init_policy(seed=2)
    w, sizes, mean, std = pol.kernel_args()
    prices = np.tile([40.0, 4.0, 6.0, 3.0], (T + 1, 1))
    tr, obs = kernels.rollout_mlp(w, sizes, mean, std, np.full(T + 1, 3.0), np.full(T, 3.0), prices,
                                  np.zeros((T, 3)), np.array([11.0, 20.0, 5.0]), kernels.params_vector(params),
                                  0.4, kernels.MODE_HYBRID)
    C = kernels.COL
    assert tr[0, C["soc"]] == 0.4
    assert np.array_equal(tr[1:, C["soc"]], tr[:-1, C["soc_next"]])
    assert np.array_equal(obs[:, 5], tr[:, C["soc"]])
    assert np.all(obs[:, 6:] == [11.0, 20.0, 5.0])


def test_fault_column_and_raise():
    params = PlantParams()
    b = random_batch(3, 0, params)
    b["soc"] = np.array([0.5, 0.95, 0.5])
    b["designs"] = np.tile([10.0, 20.0, 5.0], (3, 1))
    # idle plant: the out-of-range SOC is carried through unchanged
    b["actions"] = np.zeros((3, 5))
    b["p_pred"] = b["p_avail"] = np.zeros(3)
    out = run_batch(b, params, kernels.MODE_HYBRID)
    assert list(out[:, kernels.COL["fault"]]) == [0.0, 1.0, 0.0]
    with pytest.raises(SocBoundError, match="step 1"):
        kernels.raise_on_fault(out)
    kernels.raise_on_fault(out[[0, 2]])


def test_unknown_backend():
    with pytest.raises(ValueError, match="unavailable"):
        kernels.get_backend("fortran")


def test_trace_layout():
    assert kernels.N_COLS == len(kernels.TRACE_COLUMNS) == 43
    assert kernels.TRACE_COLUMNS[-1] == "fault"
    assert kernels.OBS_DIM == 9

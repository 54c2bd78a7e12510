"""Scenario engines behind the CLI: dispatch, sweeps, result records."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .angular import HalfInt, Level, LevelScheme
from .config import ScenarioConfig, config_hash
from .medium import ControlField, GroundState, susceptibility, \
    transverse_decompose
from .microdipole import DipoleSolver, RunningAverage, \
    gaussian_configuration, random_ball_configuration, \
    self_consistent_epsilon, slab_transmission
from .transport import DiffusionModel, solve_gain_diffusion_sphere
from .protocols import PsiMinusState, mz_signal
from . import mcscatter as mc

__all__ = ["ResultRecord", "ResultRow", "run_scenario"]


@dataclass(frozen=True)
class ResultRow:
    sweep_var: str
    value: float
    stat_err: float = 0.0
    order: int | None = None
    channel: str = ""
    sweep_value: float = 0.0


@dataclass
class ResultRecord:
    scenario: str
    config_hash: str
    version: str
    seed: int
    rows: list = field(default_factory=list)
    wall_time: float = 0.0
    complete: bool = True


def _scheme(kind: str) -> LevelScheme:
    if kind == "two-level":
        return LevelScheme.simple()
    if kind == "rb85":
        return LevelScheme.rb85_d2()
    if kind == "rb87":
        return LevelScheme.rb87_d2()
    if kind == "lambda-rb87":
        mhz = 1.0 / 6.0666
        return LevelScheme(
            ground=(Level(2, 0.0), Level(4, 6834.683 * mhz)),
            excited=(Level(2, 0.0),),
            J=HalfInt.of(1.5), I=HalfInt.of(1.5), gamma=1.0)
    raise ValueError(f"unknown atom kind {kind!r}")


def _cloud(cfg: ScenarioConfig, control=None) -> mc.Cloud:
    sch = _scheme(cfg["atom"]["kind"])
    ground = None
    if control is not None:
        ground = GroundState.isotropic(sch, sch.ground[0].twice_F,
                                       n0=cfg["cloud"]["n0"])
    return mc.Cloud(scheme=sch, n0=cfg["cloud"]["n0"], r0=cfg["cloud"]["r0"],
                    ground=ground, control=control)


def _sweep_grid(cfg: ScenarioConfig) -> np.ndarray:
    s = cfg["sweep"]
    return np.linspace(s["start"], s["stop"], s["n"])


def _mc_params(cfg: ScenarioConfig, **kw) -> mc.MCParams:
    m = cfg["mc"]
    return mc.MCParams(n_traj=m["trajectories"], max_order=m["max_order"],
                       chunk_size=m["chunk_size"], seed=cfg["run"]["seed"],
                       **kw)


def _run_cbs_cone(cfg, record, progress):
    cloud = _cloud(cfg)
    det = cfg["detection"]
    thetas = np.linspace(0.0, det["theta_max"], det["n_theta"])
    res = mc.cbs_enhancement(cloud, thetas, _mc_params(cfg),
                             channel=det["channel"],
                             n_workers=cfg["run"]["workers"])
    for i, th in enumerate(thetas):
        record.rows.append(ResultRow("theta", float(res.eta[i]),
                                     float(res.stat_err[i]),
                                     channel=det["channel"],
                                     sweep_value=float(th)))
        progress(f"theta={th:.4f} eta={res.eta[i]:.4f}")


def _run_ladder_spectrum(cfg, record, progress):
    cloud = _cloud(cfg)
    dets = mc.backscatter_detectors([0.0], np.array([1.0, 0.0, 0.0]))
    for delta in _sweep_grid(cfg):
        res = mc.simulate_ladder(cloud, dets,
                                 _mc_params(cfg, detuning=float(delta)),
                                 n_workers=cfg["run"]["workers"])
        record.rows.append(ResultRow(
            "detuning", float(res.ladder_total[0]), float(res.stat_err[0]),
            channel="ladder", sweep_value=float(delta)))
        progress(f"detuning={delta:+.3f}")


def _run_gain_transport(cfg, record, progress):
    cloud = _cloud(cfg)
    dets = mc.backscatter_detectors([0.0], np.array([1.0, 0.0, 0.0]))
    sigma0 = cloud.sigma0()
    for g in _sweep_grid(cfg):
        if g < 0:
            raise ValueError("gain sweep values must be >= 0")
        res = mc.gain_transport(
            cloud, dets,
            _mc_params(cfg, extra_gain_sigma=float(g) * sigma0),
            n_workers=cfg["run"]["workers"])
        record.rows.append(ResultRow(
            "gain", float(res.escaped_weight / res.injected_weight),
            channel="escaped_fraction", sweep_value=float(g)))
        record.rows.append(ResultRow(
            "gain", float(res.unstable), channel="unstable",
            sweep_value=float(g)))
        progress(f"gain={g:.3f} unstable={res.unstable}")


def _run_eit_spectrum(cfg, record, progress):
    sch = _scheme(cfg["atom"]["kind"])
    if len(sch.ground) < 2:
        raise ValueError("eit-spectrum needs a multi-ground-level atom "
                         "(use atom.kind = lambda-rb87)")
    ctrl = ControlField(rabi=cfg["control"]["rabi"],
                        omega_c=-sch.ground_energy(sch.ground[1].twice_F),
                        twice_F0=sch.ground[1].twice_F,
                        twice_F_ref=sch.excited[0].twice_F,
                        polarization_q=cfg["control"]["polarization_q"])
    gs = GroundState.isotropic(sch, sch.ground[0].twice_F,
                               n0=cfg["cloud"]["n0"])
    for delta in _sweep_grid(cfg):
        chi = susceptibility(sch, gs, ctrl, float(delta))
        tc = transverse_decompose(chi, [0.0, 0.0, 1.0])
        record.rows.append(ResultRow("detuning", float(tc.chi0.imag),
                                     channel="im_chi",
                                     sweep_value=float(delta)))
        record.rows.append(ResultRow("detuning", float(tc.chi0.real),
                                     channel="re_chi",
                                     sweep_value=float(delta)))
    progress("spectrum done")


def _run_coupled_dipole_spectrum(cfg, record, progress):
    d = cfg["dipole"]
    rng = np.random.default_rng(cfg["run"]["seed"])
    factory = random_ball_configuration if d["geometry"] == "ball" \
        else gaussian_configuration
    configs = [factory(d["n_atoms"], d["radius"], rng, model=d["model"])
               for _ in range(d["n_configs"])]
    k_in = np.array([0.0, 0.0, 1.0])
    e_in = np.array([1.0, 0.0, 0.0], dtype=complex)
    for delta in _sweep_grid(cfg):
        avg = RunningAverage()
        for conf in configs:
            solver = DipoleSolver(conf, detuning=float(delta))
            if d["model"] == "vector":
                avg.push([solver.total_cross_section(k_in, e_in)])
            else:
                avg.push([solver.total_cross_section(k_in)])
        record.rows.append(ResultRow("detuning", float(avg.mean[0]),
                                     float(avg.stderr[0]),
                                     channel="cross_section",
                                     sweep_value=float(delta)))
        progress(f"detuning={delta:+.3f}")


def _run_selfconsistent_slab(cfg, record, progress):
    s = cfg["slab"]
    chi = None
    for delta in _sweep_grid(cfg):
        eps = self_consistent_epsilon(s["density"], float(delta),
                                      chi_start=chi)
        chi = eps.chi
        T = slab_transmission(eps.epsilon, s["thickness"])
        record.rows.append(ResultRow("detuning", float(T.transmittance),
                                     channel="transmittance",
                                     sweep_value=float(delta)))
    progress("slab sweep done")


def _run_diffusion_threshold(cfg, record, progress):
    d = cfg["diffusion"]
    for r0 in _sweep_grid(cfg):
        if r0 <= 0:
            raise ValueError("radius sweep values must be > 0")
        model = DiffusionModel(v_bar=d["v_bar"], l0_bar=d["l_tr"],
                               albedo=d["albedo"], l_g=d["l_g"],
                               r0=float(r0))
        mode = solve_gain_diffusion_sphere(model)
        record.rows.append(ResultRow("radius", mode.growth_rate,
                                     channel="growth_rate",
                                     sweep_value=float(r0)))
        progress(f"r0={r0:.3f} rate={mode.growth_rate:+.3e}")


def _run_protocol_utils(cfg, record, progress):
    p = cfg["protocol"]
    for n_bar in _sweep_grid(cfg):
        if n_bar < 0:
            raise ValueError("n_bar sweep values must be >= 0")
        state = PsiMinusState.with_norm_tolerance(float(n_bar), tol=1e-9)
        record.rows.append(ResultRow("n_bar", 1.0 - state.norm_squared(),
                                     channel="norm_deficit",
                                     sweep_value=float(n_bar)))
    record.rows.append(ResultRow(
        "n_atoms", mz_signal(p["i_mean"], p["xi"], p["n_atoms"]),
        channel="mz_signal", sweep_value=p["n_atoms"]))
    progress("protocol sweep done")


_DISPATCH = {
    "cbs-cone": _run_cbs_cone,
    "ladder-spectrum": _run_ladder_spectrum,
    "gain-transport": _run_gain_transport,
    "eit-spectrum": _run_eit_spectrum,
    "coupled-dipole-spectrum": _run_coupled_dipole_spectrum,
    "selfconsistent-slab": _run_selfconsistent_slab,
    "diffusion-threshold": _run_diffusion_threshold,
    "protocol-utils": _run_protocol_utils,
}


def run_scenario(cfg: ScenarioConfig, progress=lambda msg: None
                 ) -> ResultRecord:
    """Execute a validated config and return its result record.

    Engine errors propagate annotated with the scenario name; the partial
    record (marked incomplete) rides on the exception as ``record``.
    """
    record = ResultRecord(scenario=cfg.scenario, config_hash=config_hash(cfg),
                          version=__version__, seed=cfg["run"]["seed"])
    t0 = time.perf_counter()
    try:
        _DISPATCH[cfg.scenario](cfg, record, progress)
    except Exception as exc:
        record.complete = False
        record.wall_time = time.perf_counter() - t0
        exc.scenario = cfg.scenario
        exc.record = record
        raise
    record.wall_time = time.perf_counter() - t0
    return record

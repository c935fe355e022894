"""Config-driven Monte-Carlo orchestration with deterministic seeding,
optional process-level trial parallelism, and versioned CSV emission.

Config files are flat `key = value` text ('#' comments, comma-separated
lists). Every CSV row carries scheme, seed, sweep variable and value, trial
count, metric name and value; the first line is the schema marker.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines
from .analysis import PulseModel, crlb, exit_curves, gaussian_consistent_llrs
from .framing import FrameLayout
from .model import PhysicalParams, background_from_energy_dbj, photons_from_energy_dbj
from .mud import dec_repetition, extrinsic_llr, LLR_CLIP
from .rngutil import stream
from .simulate import (
    Scenario,
    SchemeResult,
    TrialConfig,
    build_scenario,
    run_proposed,
)

CSV_SCHEMA = "# schema=1"

ALL_SCHEMES = (
    "proposed_grouped",
    "proposed_ungrouped",
    "perfect_sync",
    "without_sync",
    "mmse",
    "gaussian_approx",
)


@dataclass
class ExperimentConfig:
    seed: int = 1
    trials: int = 4
    frames: int = 20
    workers: int = 0                 # 0 -> env PHC_NOMA_WORKERS or 1
    K: int = 10
    M: int = 2
    L_b: int = 1024
    N_c: int = 10
    L_q: int = 320
    L_p: int = 511
    L_g: int = 10
    tau: float = 1e-6
    eta: float = 0.5
    f: float = 6e14
    C: float = 0.15
    n_b: float = 2.0
    e_nb_dbj: float | None = None    # overrides n_b when set
    sigma_x: float = 0.0
    alpha: float = 0.5
    eps_p: float = 0.75
    eps_q: float = 0.3
    T_in: int = 4
    T_out: int = 12
    eb_dbj: float = -168.0
    sweep: str = "eb_dbj"
    sweep_values: tuple = (-168.0,)
    schemes: tuple = ("proposed_grouped", "perfect_sync")
    z_min: float = 5.0
    z_max: float = 45.0
    delay_mode: str = "staggered"
    delay_frac: float = 0.5
    delay_std: float = 2.0
    csi_A: float = 0.0
    csi_B: float = 0.0
    damping: float = 0.5
    gate_c: float = 4.0
    collect_iterations: bool = False
    sync_only: bool = False
    emit_crlb: bool = False
    delay_fractional: bool = False
    out_name: str = "results.csv"

    def physical(self) -> PhysicalParams:
        n_b = self.n_b
        if self.e_nb_dbj is not None:
            n_b = background_from_energy_dbj(
                PhysicalParams(eta=self.eta, tau=self.tau, f=self.f, C=self.C, n_b=1.0), self.e_nb_dbj
            )
        return PhysicalParams(
            eta=self.eta, tau=self.tau, f=self.f, C=self.C, n_b=n_b, sigma_x=self.sigma_x
        )

    def layout(self) -> FrameLayout:
        return FrameLayout(L_b=self.L_b, N_c=self.N_c, L_q=self.L_q, L_p=self.L_p, L_g=self.L_g)

    def trial_config(self, sweep_value, trial: int) -> TrialConfig:
        cfg = self
        if self.sweep:
            cfg = replace(self, **{self.sweep: type(getattr(self, self.sweep))(sweep_value)})
        return TrialConfig(
            seed=cfg.seed,
            trial=trial,
            K=cfg.K,
            M=cfg.M,
            frames=cfg.frames,
            eb_dbj=cfg.eb_dbj,
            alpha=cfg.alpha,
            layout=cfg.layout(),
            params=cfg.physical(),
            eps_p=cfg.eps_p,
            eps_q=cfg.eps_q,
            T_in=cfg.T_in,
            T_out=cfg.T_out,
            z_range=(cfg.z_min, cfg.z_max),
            delay_mode=cfg.delay_mode,
            delay_frac=cfg.delay_frac,
            delay_std=cfg.delay_std,
            csi_A=cfg.csi_A,
            csi_B=cfg.csi_B,
            damping=cfg.damping,
            gate_c=cfg.gate_c,
            delay_fractional=cfg.delay_fractional,
        )


# ---------------------------------------------------------------------------
# config file parsing
# ---------------------------------------------------------------------------

_LIST_FIELDS = {"sweep_values", "schemes"}


def _coerce(name: str, raw: str, default):
    if name in _LIST_FIELDS:
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if name == "sweep_values":
            return tuple(float(x) for x in items)
        return tuple(items)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if default is None or isinstance(default, float):
        return float(raw)
    if isinstance(default, int):
        return int(float(raw))
    return raw.strip()


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat `key = value` config text into an ExperimentConfig."""
    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(ExperimentConfig)}
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown config field {key!r}")
        overrides[key] = _coerce(key, raw, known[key])
    return replace(defaults, **overrides)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# presets (one per reproduced figure)
# ---------------------------------------------------------------------------

PRESETS: dict[str, dict] = {
    # BER vs received energy for all schemes, plus the grouped/ungrouped
    # sync-time comparison appended by run_preset
    "fig8": dict(
        sweep="eb_dbj",
        sweep_values=(-172.0, -170.0, -168.0, -166.0, -164.0),
        schemes=ALL_SCHEMES,
        trials=5,
        frames=20,
        out_name="fig8_ber.csv",
    ),
    # delay-estimation MSE with the CRLB reference
    "fig9": dict(
        sweep="eb_dbj",
        sweep_values=(-170.0, -168.0, -166.0, -164.0),
        schemes=("proposed_grouped", "proposed_ungrouped"),
        trials=6,
        frames=20,
        emit_crlb=True,
        delay_fractional=True,
        out_name="fig9_mse_crlb.csv",
    ),
    # BER vs maximum user delay
    "fig10": dict(
        sweep="delay_frac",
        sweep_values=(0.2, 0.4, 0.6, 0.8, 1.0),
        eb_dbj=-166.0,
        schemes=("proposed_grouped", "perfect_sync", "without_sync"),
        trials=4,
        frames=12,
        out_name="fig10_delay.csv",
    ),
    # BER vs activation probability
    "fig11": dict(
        sweep="alpha",
        sweep_values=(0.1, 0.3, 0.5, 0.7, 0.9),
        eb_dbj=-168.0,
        schemes=("proposed_grouped", "perfect_sync"),
        trials=4,
        frames=12,
        out_name="fig11_activity.csv",
    ),
    # BER vs receiver iteration
    "fig12": dict(
        sweep="eb_dbj",
        sweep_values=(-168.0, -166.0),
        schemes=("proposed_grouped", "perfect_sync"),
        trials=5,
        frames=20,
        collect_iterations=True,
        out_name="fig12_iterations.csv",
    ),
    # successfully detected bits per frame
    "fig15": dict(
        sweep="eb_dbj",
        sweep_values=(-172.0, -170.0, -168.0, -166.0, -164.0),
        schemes=("proposed_grouped", "perfect_sync", "gaussian_approx"),
        trials=4,
        frames=12,
        out_name="fig15_detected_bits.csv",
    ),
    # BER vs background radiation
    "fig16": dict(
        sweep="n_b",
        sweep_values=(1.0, 2.0, 5.0, 10.0, 20.0),
        eb_dbj=-166.0,
        schemes=("proposed_grouped", "perfect_sync", "gaussian_approx"),
        trials=4,
        frames=12,
        out_name="fig16_background.csv",
    ),
    # BER vs turbulence intensity
    "fig17": dict(
        sweep="sigma_x",
        sweep_values=(0.0, 0.1, 0.3, 0.5),
        eb_dbj=-165.0,
        schemes=("proposed_grouped", "proposed_ungrouped", "perfect_sync"),
        trials=5,
        frames=20,
        out_name="fig17_turbulence.csv",
    ),
    # BER vs CSI error level
    "fig18": dict(
        sweep="csi_B",
        sweep_values=(0.0, 0.25, 0.5, 0.75),
        csi_A=1.25,
        eb_dbj=-168.0,
        schemes=("proposed_grouped", "proposed_ungrouped"),
        trials=5,
        frames=20,
        out_name="fig18_csi.csv",
    ),
    # EXIT curves and trajectory
    "exit": dict(
        sweep="eb_dbj",
        sweep_values=(-166.0,),
        schemes=("proposed_grouped",),
        trials=1,
        frames=4,
        out_name="exit_chart.csv",
    ),
    # grouped-vs-ungrouped synchronization time; short random delays and
    # higher activity stress the candidate-collision path the grouping
    # strategy is designed to relieve
    "sync_time": dict(
        sweep="eb_dbj",
        sweep_values=(-166.0, -165.0),
        schemes=("proposed_grouped", "proposed_ungrouped"),
        trials=50,
        frames=60,
        alpha=0.7,
        delay_mode="uniform",
        delay_frac=0.1,
        sync_only=True,
        out_name="sync_time.csv",
    ),
}


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    merged = dict(PRESETS[name])
    merged.update(overrides)
    return replace(ExperimentConfig(), **merged)


# ---------------------------------------------------------------------------
# experiment execution
# ---------------------------------------------------------------------------


def _run_single_trial(args) -> tuple:
    cfg_exp, sweep_value, trial = args
    tc = cfg_exp.trial_config(sweep_value, trial)
    out: dict[str, SchemeResult] = {}
    sc: Scenario | None = None
    for name in cfg_exp.schemes:
        if name == "proposed_ungrouped":
            sc_u = build_scenario(replace(tc, M=1))
            out[name] = run_proposed(sc_u, cfg_exp.collect_iterations, cfg_exp.sync_only)
            continue
        if sc is None:
            sc = build_scenario(tc)
        if name == "proposed_grouped":
            out[name] = run_proposed(sc, cfg_exp.collect_iterations, cfg_exp.sync_only)
        elif name == "perfect_sync":
            out[name] = baselines.detect_perfect_sync(sc, cfg_exp.collect_iterations)
        elif name == "without_sync":
            out[name] = baselines.detect_without_sync(sc)
        elif name == "mmse":
            out[name] = baselines.detect_mmse(sc)
        elif name == "gaussian_approx":
            out[name] = baselines.detect_gaussian_approx(sc)
        else:
            raise ValueError(f"unknown scheme {name!r}")
    return trial, out


def run_trial(cfg_exp: ExperimentConfig, sweep_value, trial: int) -> dict[str, SchemeResult]:
    """Run one seeded trial of every configured scheme (library entry point)."""
    return _run_single_trial((cfg_exp, sweep_value, trial))[1]


@dataclass
class Aggregate:
    errors: int = 0
    bits: int = 0
    frames_decoded: int = 0
    false_alarms: int = 0
    missed: int = 0
    active_frames: int = 0
    collisions: int = 0
    sync_times: list = field(default_factory=list)
    delay_sq_errors: list = field(default_factory=list)
    iteration_errors: list = field(default_factory=list)
    iteration_bits: int = 0

    def absorb(self, r: SchemeResult) -> None:
        self.errors += r.errors
        self.bits += r.bits
        self.frames_decoded += r.frames_decoded
        self.false_alarms += r.false_alarms
        self.missed += r.missed
        self.active_frames += r.active_frames
        self.collisions += r.collisions
        if not np.isnan(r.sync_time):
            self.sync_times.append(r.sync_time)
        self.delay_sq_errors.extend(r.delay_sq_errors)
        if r.iteration_errors:
            if not self.iteration_errors:
                self.iteration_errors = [0] * len(r.iteration_errors)
            for i, e in enumerate(r.iteration_errors):
                self.iteration_errors[i] += e
            self.iteration_bits += r.iteration_bits


def effective_background(cfg: ExperimentConfig, eb_dbj: float) -> float:
    """Background plus predictable multi-user interference, the rate an
    interference-aware bound should carry per slot."""
    params = cfg.physical()
    n_s = photons_from_energy_dbj(params, eb_dbj)
    return params.n_b + (cfg.K - 1) * cfg.alpha * 0.5 * n_s


def reference_crlb(cfg: ExperimentConfig, eb_dbj: float) -> float:
    """Known-symbol delay-estimation bound at this operating point."""
    params = cfg.physical()
    lay = cfg.layout()
    n_s = photons_from_energy_dbj(params, eb_dbj)
    rng = stream(cfg.seed, "exit")  # deterministic symbol draw, any fixed stream
    symbols = rng.integers(0, 2, lay.L_s)
    symbols[-lay.L_g :] = 0
    pulse = PulseModel(symbols=symbols, amplitude=n_s, background=effective_background(cfg, eb_dbj))
    return crlb(pulse, 0.0)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path, config_text: str | None = None) -> Path:
    """Execute the sweep, aggregate deterministically, and write CSV plus a
    run manifest. Returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.trials < 1:
        raise ValueError("trials must be >= 1")
    unknown = set(cfg.schemes) - set(ALL_SCHEMES)
    if unknown:
        raise ValueError(f"unknown schemes: {sorted(unknown)}")
    workers = cfg.workers or int(os.environ.get("PHC_NOMA_WORKERS", "1"))

    rows: list[tuple] = []
    for sweep_value in cfg.sweep_values:
        jobs = [(cfg, sweep_value, t) for t in range(cfg.trials)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = dict(pool.map(_run_single_trial, jobs))
        else:
            results = dict(map(_run_single_trial, jobs))
        aggs: dict[str, Aggregate] = {name: Aggregate() for name in cfg.schemes}
        for trial in sorted(results):
            for name, r in results[trial].items():
                aggs[name].absorb(r)
        for name in cfg.schemes:
            agg = aggs[name]
            add = lambda metric, value: rows.append(
                (name, cfg.seed, cfg.sweep, sweep_value, cfg.trials, metric, value)
            )
            if not cfg.sync_only:
                add("ber", agg.errors / agg.bits if agg.bits else 0.0)
                add("errors", agg.errors)
                add("bits", agg.bits)
                add("frames_decoded", agg.frames_decoded)
                if agg.frames_decoded:
                    add("detected_bits_per_frame", (agg.bits - agg.errors) / agg.frames_decoded)
            if name.startswith("proposed"):
                add("missed", agg.missed)
                add("false_alarms", agg.false_alarms)
                add("active_frames", agg.active_frames)
                add("candidate_collisions", agg.collisions)
                if agg.sync_times:
                    finite = [t for t in agg.sync_times if np.isfinite(t)]
                    add("sync_time_mean", float(np.mean(finite)) if finite else float("inf"))
                    add("sync_time_min", float(min(agg.sync_times)))
                    add("sync_time_completed", len(finite))
                if agg.delay_sq_errors:
                    add("delay_mse", float(np.mean(agg.delay_sq_errors)))
            if agg.iteration_errors and agg.iteration_bits:
                for i, e in enumerate(agg.iteration_errors, start=1):
                    add(f"ber_iter_{i}", e / agg.iteration_bits)
        if cfg.emit_crlb:
            rows.append(
                ("crlb", cfg.seed, cfg.sweep, sweep_value, cfg.trials, "delay_var_bound",
                 reference_crlb(cfg, float(sweep_value)))
            )

    csv_path = out_dir / cfg.out_name
    _write_csv(csv_path, rows)
    _write_manifest(out_dir, cfg, config_text)
    return csv_path


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _write_csv(path: Path, rows) -> None:
    lines = [CSV_SCHEMA, "scheme,seed,sweep,sweep_value,trials,metric,value"]
    lines += [",".join(_fmt(x) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, config_text: str | None) -> None:
    body = config_text if config_text is not None else repr(cfg)
    digest = hashlib.sha256(body.encode()).hexdigest()
    (out_dir / "run-manifest.txt").write_text(
        f"config_sha256 = {digest}\nseed = {cfg.seed}\nschema = 1\n"
    )


# ---------------------------------------------------------------------------
# EXIT-chart experiment
# ---------------------------------------------------------------------------


def exit_chart_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    """Measure detector/decoder EXIT curves on one realized scenario and
    write (component, I_A, I_E) rows plus the alternating trajectory."""
    eb = float(cfg.sweep_values[0])
    tc = cfg.trial_config(eb, 0)
    sc = build_scenario(tc)
    lay = tc.layout
    rng = stream(cfg.seed, "exit")

    # reference user: the first frame present in the scenario
    keys = sorted(sc.data.keys())
    if not keys:
        raise RuntimeError("scenario has no active frames")
    k0, j0 = keys[0]
    truth_chips = {}
    for (k, j), bits in sc.data.items():
        coded = np.repeat(np.concatenate([bits, sc.vp_bits]), lay.N_c)
        truth_chips[(k, j)] = sc.interleavers[k].interleave(coded)

    def detector_pass(sigma):
        # Gaussian-consistent priors on every frame's chips at the given
        # quality; one detector pass for the reference frame
        total = np.full(len(sc.counts), tc.params.n_b)
        for (k, j), chips in truth_chips.items():
            a = gaussian_consistent_llrs(rng, chips, sigma)
            if (k, j) == (k0, j0):
                a_ref = a
            soft = 1.0 / (1.0 + np.exp(-np.clip(a, -LLR_CLIP, LLR_CLIP)))
            sym = np.concatenate([sc.sps[sc.groups[k]].astype(float), soft, np.zeros(lay.L_g)])
            start = int(sc.delays[k]) + j * lay.L_s
            total[start : start + lay.L_s] += sc.n_s * sc.gain_hat[k, j] * sym
        start = int(sc.delays[k0]) + j0 * lay.L_s
        sl = slice(start, start + lay.L_s)
        soft_ref = 1.0 / (1.0 + np.exp(-np.clip(a_ref, -LLR_CLIP, LLR_CLIP)))
        sym_ref = np.concatenate([sc.sps[sc.groups[k0]].astype(float), soft_ref, np.zeros(lay.L_g)])
        sigma_t = np.maximum(total[sl] - sc.n_s * sc.gain_hat[k0, j0] * sym_ref, 1e-9)
        e = extrinsic_llr(sc.counts[sl], sigma_t, sc.n_s * sc.gain_hat[k0, j0], 1)
        e = np.clip(e, -LLR_CLIP, LLR_CLIP)[lay.L_p : lay.L_p + lay.L_c]
        return e, truth_chips[(k0, j0)]

    def decoder_pass(sigma):
        bits = sc.data[(k0, j0)]
        coded_bits = np.concatenate([bits, sc.vp_bits])
        chips = np.repeat(coded_bits, lay.N_c)
        a = gaussian_consistent_llrs(rng, chips, sigma)
        ext, _ = dec_repetition(a.reshape(lay.n_coded_bits, lay.N_c), lay.N_c)
        data_rows = slice(0, lay.L_b)  # measure on data chips only
        return ext[data_rows].reshape(-1), chips[: lay.L_b * lay.N_c]

    chart = exit_curves(detector_pass, decoder_pass, rng)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [CSV_SCHEMA, "component,i_a,i_e,step"]
    for x, y in zip(chart.detector.i_a, chart.detector.i_e):
        rows.append(f"detector,{_fmt(float(x))},{_fmt(float(y))},")
    for x, y in zip(chart.decoder.i_a, chart.decoder.i_e):
        rows.append(f"decoder,{_fmt(float(x))},{_fmt(float(y))},")
    for i, (x, y) in enumerate(chart.trajectory):
        rows.append(f"trajectory,{_fmt(float(x))},{_fmt(float(y))},{i}")
    path = out_dir / cfg.out_name
    path.write_text("\n".join(rows) + "\n")
    _write_manifest(out_dir, cfg, None)
    return path

"""Experiment orchestration: seeding, the three experiment drivers and CSV output.

Every stochastic quantity is drawn from a ``SeedSequence`` whose spawn key is
a fixed tuple of counters (trial, purpose, grid index).  The key does not
depend on the worker count or scheduling order, so a (config, seed) pair
always produces the same bytes.  Compared variants within one trial share
their data, maps and initial weights.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as feat
from . import ldpc, losnlos, lstm, vlc
from .errors import NumericError, TrainingDivergenceError

__all__ = [
    "MetricRecord",
    "RECORD_COLUMNS",
    "run_experiment",
    "run_kernel_bench",
    "run_ldpc_ber",
    "run_losnlos",
    "trial_seed",
    "write_records",
]

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("experiment", "variant", "variable", "x", "metric", "value", "seed", "flag")

# purposes in the spawn key
_DATA, _MAP, _NET, _TEST = 0, 1, 2, 3


def trial_seed(master: int, *counters: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(c) for c in counters))


@dataclass(frozen=True)
class MetricRecord:
    experiment: str
    variant: str
    variable: str
    x: float
    metric: str
    value: float
    seed: int
    flag: str = "ok"

    def row(self):
        x = repr(float(self.x)) if isinstance(self.x, float) else str(self.x)
        return [self.experiment, self.variant, self.variable, x, self.metric,
                repr(float(self.value)), str(self.seed), self.flag]


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        w.writerows(r.row() for r in records)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fan_out(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _variant_label(variant: str) -> str:
    return {"none": "plain", "rff": "rff", "ddrff": "ddrff"}[variant]


# ---------------------------------------------------------------------------
# kernel approximation sweep

def _kernel_trial(job):
    cfg, s = job
    p = cfg.params
    rng = np.random.default_rng(trial_seed(cfg.seed, s, _DATA))
    pairs = rng.standard_normal((p["n_pairs"], 2, p["input_dim"]))
    if p["bandwidth"] == "silverman":
        lam = feat.silverman_bandwidth(pairs.reshape(-1, p["input_dim"]))
    else:
        lam = p["bandwidth"]
    out = []
    for g, n_g in enumerate(p["n_features"]):
        fmap = feat.sample_feature_map(p["input_dim"], n_g, p["sigma"], trial_seed(cfg.seed, s, _MAP, g))
        for variant in cfg.variants:
            rep = feat.kernel_approx_error(fmap, pairs, lam=lam if variant == "ddrff" else None)
            for metric, value in (("mean_abs_err", rep.mean_abs_error), ("max_abs_err", rep.max_abs_error),
                                  ("variance", rep.variance_of_estimate)):
                out.append(MetricRecord("kernel_bench", variant, "n_G", n_g, metric, value, s))
    return out


def run_kernel_bench(cfg, out_dir=None) -> list:
    """Kernel-estimate error of each feature variant against its own analytic target."""
    jobs = [(cfg, s) for s in range(cfg.params["n_seeds"])]
    records = [r for chunk in _fan_out(_kernel_trial, jobs, cfg.workers) for r in chunk]
    if out_dir is not None:
        write_records(records, Path(out_dir) / "kernel_error.csv")
    return records


# ---------------------------------------------------------------------------
# LOS/NLOS classification

def _stream_scale(x: np.ndarray) -> np.ndarray:
    # each stream is brought to unit RMS by its own level, like a slow AGC
    return x / np.sqrt(np.mean(x * x))


def _median_distance(x: np.ndarray) -> float:
    sq = np.sum(x * x, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    return float(np.sqrt(np.median(d2[np.triu_indices(len(x), 1)])))


def _losnlos_trial(job):
    cfg, s = job
    p = cfg.params
    gen = dict(scenario=p["scenario"], n_sc=p["n_subcarriers"], rician_k=10.0 ** (p["rician_k_db"] / 10.0),
               coherence=p["coherence"])
    longest = max(p["train_sizes"])
    walk = losnlos.random_walk(p["train_start"], longest - 1, p["step_size"], seed=trial_seed(cfg.seed, s, _DATA, 0))
    train_full = losnlos.generate_sequence(walk, seed=trial_seed(cfg.seed, s, _DATA, 1), **gen)
    tests = []
    for k, start in enumerate(p["test_starts"]):
        w = losnlos.random_walk(start, p["test_length"] - 1, p["step_size"], seed=trial_seed(cfg.seed, s, _TEST, k, 0))
        tests.append(losnlos.generate_sequence(w, seed=trial_seed(cfg.seed, s, _TEST, k, 1), **gen))
    test_x = [_stream_scale(t.features) for t in tests]
    test_y = [t.labels for t in tests]

    records, rocs, curves, sample = [], {}, {}, None
    for n_train in p["train_sizes"]:
        x_train = _stream_scale(train_full.features[:n_train])
        y_train = train_full.labels[:n_train]
        if s == 0 and n_train == longest:
            sample = losnlos.LabeledChannelSequence(train_full.features[:n_train], y_train, p["scenario"])
        fmap = feat.sample_feature_map(x_train.shape[1], p["n_features"], _median_distance(x_train),
                                       trial_seed(cfg.seed, s, _MAP, n_train))
        lam = feat.silverman_bandwidth(x_train)
        transforms = {
            "none": lambda x: x,
            "rff": lambda x: feat.rff_transform(fmap, x),
            "ddrff": lambda x: feat.ddrff_transform(fmap, lam, x),
        }
        for variant in cfg.variants:
            z_train = transforms[variant](x_train)
            # one scalar per pipeline so training inputs have unit RMS entries
            level = np.sqrt(np.mean(z_train * z_train))
            batch = lstm.SequenceBatch.from_stream(z_train / level, y_train, p["chunk_length"])
            params = lstm.init_parameters(z_train.shape[1], p["n_hidden"], seed=trial_seed(cfg.seed, s, _NET, n_train))
            history = []
            flag = "ok"
            try:
                params = lstm.train(params, batch, learning_rate=p["learning_rate"], epochs=p["epochs"],
                                    seed=trial_seed(cfg.seed, s, _NET, n_train, 1), gradient_clip=p["gradient_clip"],
                                    history=history)
                probs = lstm.predict(params, [transforms[variant](x) / level for x in test_x])
                f1 = lstm.evaluate_probabilities(probs, test_y)["f1"]
            except TrainingDivergenceError as exc:
                log.warning("seed %d, %s, train size %d: %s", s, variant, n_train, exc)
                flag, f1, probs = "diverged", 0.0, None
            records.append(MetricRecord("losnlos", _variant_label(variant), "train_size", n_train, "f1", f1, s, flag))
            if n_train == p["roc_train_size"] and probs is not None:
                rocs[variant] = probs
                curves[variant] = history
    return records, rocs, curves, sample, test_y


def run_losnlos(cfg, out_dir=None) -> list:
    """Train plain / RFF / DD-RFF LSTMs on identical data and score them per timestep."""
    p = cfg.params
    jobs = [(cfg, s) for s in range(p["n_seeds"])]
    results = _fan_out(_losnlos_trial, jobs, cfg.workers)
    records = [r for res in results for r in res[0]]
    if out_dir is None:
        return records
    out_dir = Path(out_dir)
    write_records(records, out_dir / "f1.csv")
    for variant in cfg.variants:
        name = _variant_label(variant)
        kept = [res for res in results if variant in res[1]]
        if not kept:
            continue
        probs = [q for res in kept for q in res[1][variant]]
        labels = [y for res in kept for y in res[4]]
        lstm.write_roc_csv(lstm.evaluate_probabilities(probs, labels)["roc"], out_dir / f"roc_{name}.csv")
        curves = np.array([res[2][variant] for res in kept])
        lstm.write_loss_csv(curves.mean(axis=0), out_dir / f"loss_{name}.csv")
    sample = results[0][3]
    if sample is not None:
        losnlos.write_sequence_csv(sample, out_dir / "train_sequence.csv")
    return records


# ---------------------------------------------------------------------------
# LDPC over the nonlinear optical link

def _channel(p):
    if p["channel"] == "linear":
        return None
    return vlc.RappModel(p["v_sat"], p["knee"], p["memory_alpha"])


def _ber_trial(job):
    cfg, s, system = job
    p = cfg.params
    model = _channel(p)
    n_words = math.ceil(p["info_bits"] / system.n_info)
    rows, traces = [], {}
    mid = len(p["snr_db"]) // 2
    for j, snr_db in enumerate(p["snr_db"]):
        rng = np.random.default_rng(trial_seed(cfg.seed, s, _DATA, j))
        info = rng.integers(0, 2, (n_words, system.n_info), dtype=np.uint8)
        code = ldpc.encode(system, info)
        if p["noiseless"]:
            sigma_n = 0.0
            sigma_sq = 1e-12
        else:
            sigma_n = vlc.noise_std_for_snr(snr_db, model, p["gain"], p["backoff"])
            sigma_sq = sigma_n * sigma_n
        y = vlc.transmit(code, model, p["gain"], sigma_n, backoff=p["backoff"], rng=rng)
        width = _median_distance(y) if p["kernel_width"] == "median" else p["kernel_width"]
        if width <= 0:
            width = 1.0
        fmap = feat.sample_feature_map(system.n_bits, system.n_bits, width, trial_seed(cfg.seed, s, _MAP, j))
        for variant in cfg.variants:
            trace = [] if (p["trace"] and s == 0 and j == mid) else None
            if variant == "none":
                res = ldpc.sum_product_decode(system, vlc.channel_llrs(y, sigma_sq), p["max_inner"])
                hard = res.hard_bits
                if trace is not None:
                    weights = ldpc.syndrome(system, hard).sum(axis=1)
                    trace.extend((1, int(i), int(w)) for i, w in zip(res.iterations, weights))
            else:
                lam = None
                if variant == "ddrff":
                    lam = feat.silverman_bandwidth(y) if p["bandwidth"] == "silverman" else p["bandwidth"]
                res = ldpc.rkhs_mp_decode_batch(y, system, sigma_sq, fmap, p["max_outer"], p["max_inner"],
                                                p["ridge"], lam, trace=trace)
                hard = res.hard_bits
            errors = int(np.count_nonzero(hard[:, :system.n_info] != info))
            ber = errors / info.size
            if not math.isfinite(ber):
                raise NumericError(f"non-finite BER at seed {s}, SNR {snr_db} dB")
            rows.append(MetricRecord("ldpc_ber", _variant_label(variant), "snr_db", float(snr_db), "ber", ber, s))
            if trace is not None:
                traces[variant] = trace
    return rows, traces


def run_ldpc_ber(cfg, out_dir=None) -> list:
    """BER of plain sum-product and of the RKHS outer loop with each feature variant."""
    p = cfg.params
    base = ldpc.load_base_matrix(p["base_matrix"]) if p["base_matrix"] else None
    system = ldpc.build_code(base=base, lift=p["lift"] if base is not None else None)
    jobs = [(cfg, s, system) for s in range(p["n_seeds"])]
    results = _fan_out(_ber_trial, jobs, cfg.workers)
    records = [r for res in results for r in res[0]]
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_records(records, out_dir / "ber.csv")
        for variant, trace in results[0][1].items():
            _write_rows(out_dir / f"decoder_trace_{_variant_label(variant)}.csv",
                        ["outer_iter", "inner_iters", "syndrome_weight"], trace)
    return records


RUNNERS = {"kernel_bench": run_kernel_bench, "losnlos": run_losnlos, "ldpc_ber": run_ldpc_ber}


def run_experiment(cfg, out_dir=None) -> list:
    return RUNNERS[cfg.experiment](cfg, out_dir)

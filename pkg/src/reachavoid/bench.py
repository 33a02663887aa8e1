"""Batch trials over a defense x attack policy matrix.

Every trial draws one scenario from the template with a seed derived from
``(spec.seed, trial)``, so all policy cells of a trial share the same initial
state.  Summaries contain no wall-clock data and are byte-identical across
reruns of the same spec.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import check_bound
from .engine import run_game, trace_csv
from .scenarios import BenchSpec, generate_random_scenario, scenario_to_dict

log = logging.getLogger(__name__)

CATEGORIES = ("DefenseSuccessCapture", "DefenseSuccessTimeout", "DefenseFail")


def trial_seed(seed: int, trial: int) -> int:
    """Scenario seed of one trial; shared by all policy cells."""
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1)[0])


def categorize(summary: dict) -> str:
    if summary["payoff"] > 0:
        return "DefenseFail"
    if summary["timeouts"] > 0:
        return "DefenseSuccessTimeout"
    return "DefenseSuccessCapture"


def check_flags(summary: dict, dim: int) -> dict:
    """Per-allocation check-number bound test where it applies."""
    applicable = violated = 0
    for a in summary["allocations"]:
        if a["n_active"] > 0 and a["max_ads_size"] <= dim:
            applicable += 1
            if not a["check_count"] < check_bound(dim, a["n_active"]):
                violated += 1
    return {"applicable": applicable, "violated": violated}


@dataclass
class OutcomeTally:
    """Aggregated results of one policy cell."""

    defense: str
    attack: str
    counts: dict = field(default_factory=lambda: {c: 0 for c in CATEGORIES})
    capture_numbers: list = field(default_factory=list)
    check_numbers: list = field(default_factory=list)
    payoff_bound_slack: list = field(default_factory=list)
    check_bound_violations: int = 0
    errors: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return sum(self.counts.values()) + len(self.errors)

    def add(self, trial: int, result: dict, dim: int) -> None:
        if "error" in result:
            self.errors.append({"trial": trial, "error": result["error"]})
            return
        self.counts[categorize(result)] += 1
        self.capture_numbers.append(result["captures"])
        self.check_numbers.append(result["check_count"])
        if result["defense"] == "mdea":
            self.payoff_bound_slack.append(result["payoff_bound"] - result["payoff"])
        self.check_bound_violations += check_flags(result, dim)["violated"]

    def to_json(self) -> dict:
        return {
            "defense": self.defense, "attack": self.attack, "counts": dict(self.counts),
            "capture_numbers": self.capture_numbers, "check_numbers": self.check_numbers,
            "payoff_bound_slack": self.payoff_bound_slack,
            "check_bound_violations": self.check_bound_violations, "errors": self.errors,
        }


@dataclass
class BenchResult:
    spec: BenchSpec
    tallies: dict
    trials: list
    paired: dict

    def summary(self) -> dict:
        return {
            "trials": self.spec.trials, "seed": self.spec.seed,
            "defenses": list(self.spec.defenses), "attacks": list(self.spec.attacks),
            "cells": {f"{d}/{a}": t.to_json() for (d, a), t in self.tallies.items()},
            "paired_capture": self.paired,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        head = f"{'defense':<10}{'attack':<10}{'capture':>9}{'timeout':>9}{'fail':>7}{'errors':>8}" \
               f"{'mean cap':>10}{'mean chk':>10}"
        lines = [head, "-" * len(head)]
        for (d, a), t in self.tallies.items():
            mc = np.mean(t.capture_numbers) if t.capture_numbers else float("nan")
            mk = np.mean(t.check_numbers) if t.check_numbers else float("nan")
            c = t.counts
            lines.append(f"{d:<10}{a:<10}{c['DefenseSuccessCapture']:>9}{c['DefenseSuccessTimeout']:>9}"
                         f"{c['DefenseFail']:>7}{len(t.errors):>8}{mc:>10.3f}{mk:>10.1f}")
        for a, p in self.paired.items():
            lines.append(f"paired mdea vs initial ({a}): >= in {p['at_least']}/{p['pairs']}, "
                         f"> in {p['strictly']}/{p['pairs']}")
        return "\n".join(lines) + "\n"


def _run_trial(args):
    spec, trial = args
    seed = trial_seed(spec.seed, trial)
    out = {"trial": trial, "seed": seed, "cells": {}}
    try:
        cfg = generate_random_scenario(spec.template, seed, spec.dt, spec.allocation_period, spec.t_max)
    except Exception as exc:  # recorded, batch continues
        out["error"] = f"{type(exc).__name__}: {exc}"
        return out
    out["scenario"] = scenario_to_dict(cfg)
    for d in spec.defenses:
        for a in spec.attacks:
            key = f"{d}/{a}"
            try:
                trace = run_game(cfg, d, a, record_phi=False, record_states=spec.write_traces)
                s = trace.summary()
                out["cells"][key] = s
                if spec.write_traces and spec.out_dir:
                    base = Path(spec.out_dir) / "trials" / f"{d}_{a}"
                    base.mkdir(parents=True, exist_ok=True)
                    (base / f"trial_{trial:04d}.csv").write_text(trace_csv(trace))
                    (base / f"trial_{trial:04d}.json").write_text(
                        json.dumps(s, sort_keys=True, indent=2) + "\n")
            except Exception as exc:
                out["cells"][key] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def run_bench(spec: BenchSpec) -> BenchResult:
    """Execute all trials, aggregate, and write artifacts when ``out_dir`` is set.

    Artifacts: ``summary.json``, ``summary.txt`` and, with traces enabled,
    ``trials/<defense>_<attack>/trial_NNNN.{csv,json}``.
    """
    spec.validate()
    dim = int(spec.template["dimension"])
    jobs = [(spec, t) for t in range(spec.trials)]
    workers = max(1, min(int(spec.workers), spec.trials, os.cpu_count() or 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]

    tallies = {(d, a): OutcomeTally(d, a) for d in spec.defenses for a in spec.attacks}
    for r in results:
        for (d, a), tally in tallies.items():
            if "error" in r:
                tally.add(r["trial"], {"error": r["error"]}, dim)
            else:
                tally.add(r["trial"], r["cells"][f"{d}/{a}"], dim)

    paired = {}
    if "mdea" in spec.defenses and "initial" in spec.defenses:
        for a in spec.attacks:
            at_least = strictly = pairs = 0
            for r in results:
                m = r.get("cells", {}).get(f"mdea/{a}", {})
                i = r.get("cells", {}).get(f"initial/{a}", {})
                if "captures" in m and "captures" in i:
                    pairs += 1
                    at_least += m["captures"] >= i["captures"]
                    strictly += m["captures"] > i["captures"]
            paired[a] = {"pairs": pairs, "at_least": at_least, "strictly": strictly}

    res = BenchResult(spec, tallies, results, paired)
    if spec.out_dir:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(res.summary_json())
        (out / "summary.txt").write_text(res.table())
    return res

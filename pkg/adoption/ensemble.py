import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from adoption.agents import mms_screen
from adoption.simulate import simulate_adoption

logger = logging.getLogger(__name__)

DEFAULT_ENSEMBLE_SIZE = 100
SELECTIONS = ("min", "avg", "max")


def run_streams(seed, size):
    """Independent Generators, one per run, derived from (seed, run index)."""
    children = np.random.SeedSequence(seed).spawn(size)
    return [np.random.default_rng(child) for child in children]


def run_ensemble(model, params, agents, size=DEFAULT_ENSEMBLE_SIZE, mms_probability=1.0, jobs=None):
    """
    Simulate ``size`` independent adoption runs on a thread pool.

    Each run screens the agents (MMS) and then simulates, both on its own RNG
    stream, so results do not depend on scheduling or ``jobs``.

    Returns:
        list[AdoptionRun]: ordered by run index
    """
    streams = run_streams(params.seed, size)

    def one_run(run_id):
        rng = streams[run_id]
        screened = mms_screen(agents, mms_probability, rng)
        return simulate_adoption(model, params, screened, rng=rng, run_id=run_id)

    with ThreadPoolExecutor(max_workers=jobs) as executor:
        runs = list(executor.map(one_run, range(size)))
    totals = [r.final_capacity_kw for r in runs]
    logger.info("Ensemble of %d runs: final capacity %.1f / %.1f / %.1f kW (min / median / max)",
                size, min(totals), float(np.median(totals)), max(totals))
    return runs


def select_scenarios(runs):
    """
    Pick the min, median-closest and max runs by final aggregate capacity.

    Ties go to the lowest run index.

    Returns:
        dict: {"min": run, "avg": run, "max": run}
    """
    if len(runs) < 3:
        raise ValueError(f"need at least 3 runs to select scenarios, got {len(runs)}")
    totals = np.array([r.final_capacity_kw for r in runs])
    median = np.median(totals)
    return {
        "min": runs[int(np.argmin(totals))],
        "avg": runs[int(np.argmin(np.abs(totals - median)))],
        "max": runs[int(np.argmax(totals))],
    }


def ensemble_summary(runs, selected=None):
    selected = selected or {}
    tags = {run.run_id: label for label, run in selected.items()}
    return pd.DataFrame({
        "run": [r.run_id for r in runs],
        "final_capacity_kw": [r.final_capacity_kw for r in runs],
        "adopters": [int(r.states[-1].sum()) for r in runs],
        "eligible": [r.eligible_count for r in runs],
        "selected": [tags.get(r.run_id, "") for r in runs],
    })


def mean_fraction(runs):
    """Ensemble mean adopted fraction per step and its standard error."""
    fractions = np.stack([r.adopted_fraction for r in runs])
    se = fractions.std(axis=0, ddof=1) / np.sqrt(len(runs)) if len(runs) > 1 else np.zeros(fractions.shape[1])
    return fractions.mean(axis=0), se

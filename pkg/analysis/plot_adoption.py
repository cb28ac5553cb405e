import glob
import os
import sys

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from adoption.bass import DiffusionParams, bass_closed_form  # noqa: E402

RESULTS_DIR = sys.argv[1] if len(sys.argv) > 1 else 'results'
PLOTS_DIR = 'plots'
os.makedirs(PLOTS_DIR, exist_ok=True)

P_INNOV = 0.01
Q_IMIT = 0.4
PALETTE = {'min': '#1f77b4', 'avg': '#2ca02c', 'max': '#d62728'}


def load_data():
    """Per-run trajectories (long table) and the ensemble summary of a scenarios run."""
    files = sorted(glob.glob(os.path.join(RESULTS_DIR, 'trajectories', 'run*.csv')))
    if not files:
        raise FileNotFoundError(f"No trajectory files under {RESULTS_DIR}/trajectories")
    frames = []
    for path in files:
        df = pd.read_csv(path)
        df['run'] = int(os.path.basename(path)[3:-4])
        frames.append(df)
    summary = pd.read_csv(os.path.join(RESULTS_DIR, 'ensemble_summary.csv'), keep_default_na=False)
    return pd.concat(frames, ignore_index=True), summary


def plot_fractions(traj):
    """Ensemble mean adopted fraction with a 95% band against the closed-form curve."""
    stats = traj.groupby('time_years')['adopted_fraction'].agg(['mean', 'std', 'count']).reset_index()
    se = stats['std'].fillna(0.0) / np.sqrt(stats['count'])
    times = stats['time_years'].to_numpy()
    dt = float(np.diff(times).min()) if len(times) > 1 else 1.0
    params = DiffusionParams(p_innov=P_INNOV, q_imit=Q_IMIT, dt=dt, horizon=float(times.max()))
    plt.figure(figsize=(9, 5))
    for run, data in traj.groupby('run'):
        plt.plot(data['time_years'], data['adopted_fraction'], color='grey', alpha=0.08, linewidth=0.8)
    plt.plot(times, stats['mean'], color='black', label='Ensemble mean')
    plt.fill_between(times, stats['mean'] - 1.96 * se, stats['mean'] + 1.96 * se, color='black', alpha=0.2)
    plt.plot(times, bass_closed_form(params, times), color='#d62728', linestyle='--', label='Closed form')
    plt.xlabel('Years')
    plt.ylabel('Adopted fraction of eligible agents')
    plt.title('PV adoption: agent ensemble vs Bass closed form')
    plt.legend()
    plt.tight_layout()
    plt.savefig(f'{PLOTS_DIR}/adoption_fraction.png')
    plt.close()


def plot_capacity(traj, summary):
    """Aggregate PV capacity of every run, with the selected runs highlighted."""
    selected = summary[summary['selected'] != '']
    plt.figure(figsize=(9, 5))
    for run, data in traj.groupby('run'):
        plt.plot(data['time_years'], data['capacity_kw'] / 1e3, color='grey', alpha=0.15, linewidth=0.8)
    for _, row in selected.iterrows():
        data = traj[traj['run'] == row['run']]
        plt.plot(data['time_years'], data['capacity_kw'] / 1e3, color=PALETTE.get(row['selected']),
                 linewidth=2, label=f"{row['selected']} (run {row['run']})")
    plt.xlabel('Years')
    plt.ylabel('Installed PV (MW)')
    plt.title('Aggregate PV capacity evolution')
    plt.legend()
    plt.tight_layout()
    plt.savefig(f'{PLOTS_DIR}/adoption_capacity.png')
    plt.close()


def main():
    sns.set_theme(style='whitegrid')
    traj, summary = load_data()
    plot_fractions(traj)
    plot_capacity(traj, summary)
    print(f"Adoption plots saved to {PLOTS_DIR}/")


if __name__ == '__main__':
    main()

import os
import sys

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

RESULTS_DIR = sys.argv[1] if len(sys.argv) > 1 else 'results'
PLOTS_DIR = 'plots'
os.makedirs(PLOTS_DIR, exist_ok=True)

# direct peak above the axis, reverse peak below, cost components stacked
PALETTE = {
    'direct': '#d62728',
    'reverse': '#1f77b4',
    'lines': '#7f7f7f',
    'bess': '#2ca02c',
    'regulators': '#ff7f0e',
}


def load_data():
    """Curve, plot data and (when present) per-scenario dispersion of an nrcc run."""
    curve_path = os.path.join(RESULTS_DIR, 'nrcc_curve.csv')
    plot_path = os.path.join(RESULTS_DIR, 'nrcc_plot_data.csv')
    for path in [curve_path, plot_path]:
        if not os.path.exists(path):
            raise FileNotFoundError(f"File not found: {path}")
    curve = pd.read_csv(curve_path)
    plot_data = pd.read_csv(plot_path)
    dispersion_path = os.path.join(RESULTS_DIR, 'dispersion.csv')
    dispersion = pd.read_csv(dispersion_path) if os.path.exists(dispersion_path) else None
    return curve, plot_data, dispersion


def plot_curve(plot_data, dispersion=None):
    """Netload range [-lambda_r, lambda_d] against the budget, with held-out dispersion bars."""
    budget_k = plot_data['gamma'] / 1e3
    plt.figure(figsize=(9, 5))
    plt.step(budget_k, plot_data['lambda_d'], where='post', color=PALETTE['direct'], label='Direct peak')
    plt.step(budget_k, -plot_data['lambda_r'], where='post', color=PALETTE['reverse'], label='Reverse peak')
    plt.fill_between(budget_k, -plot_data['lambda_r'], plot_data['lambda_d'], step='post', alpha=0.12, color='grey')
    if not plot_data['disp_hi'].isna().all():
        width = 0.015 * max(budget_k.max(), 1.0)
        plt.bar(budget_k, plot_data['disp_hi'] - plot_data['disp_lo'], bottom=plot_data['disp_lo'],
                width=width, color='black', alpha=0.35, label='Held-out scenarios')
    if dispersion is not None and not dispersion.empty:
        failed = dispersion[~dispersion['feasible'].astype(bool)]
        for gamma in failed['gamma'].unique():
            plt.axvline(gamma / 1e3, color='black', linestyle=':', linewidth=0.8)
    plt.axhline(0.0, color='black', linewidth=0.6)
    plt.xlabel('Investment budget (k)')
    plt.ylabel('Substation netload (MW)')
    plt.title('Netload range cost curve')
    plt.legend()
    plt.tight_layout()
    plt.savefig(f'{PLOTS_DIR}/nrcc.png')
    plt.close()


def plot_cost_breakdown(curve):
    ok = curve.dropna(subset=['total_cost'])
    if ok.empty:
        return
    labels = [f"{g / 1e3:.0f}" for g in ok['gamma']]
    bottom = np.zeros(len(ok))
    plt.figure(figsize=(9, 5))
    for part in ['lines', 'bess', 'regulators']:
        values = ok[f'cost_{part}'].to_numpy() / 1e3
        plt.bar(labels, values, bottom=bottom, color=PALETTE[part], label=part.capitalize())
        bottom += values
    plt.xlabel('Investment budget (k)')
    plt.ylabel('Invested (k)')
    plt.title('Investment cost breakdown per budget')
    plt.legend()
    plt.tight_layout()
    plt.savefig(f'{PLOTS_DIR}/nrcc_costs.png')
    plt.close()


def plot_dispersion(dispersion):
    """Distribution of held-out direct and reverse peaks per budget."""
    ok = dispersion[dispersion['feasible'].astype(bool)]
    if ok.empty:
        return
    long = pd.concat([
        ok.assign(peak='direct', mw=ok['peak_d_mw']),
        ok.assign(peak='reverse', mw=-ok['peak_r_mw']),
    ], ignore_index=True)
    long['budget_k'] = (long['gamma'] / 1e3).round(0).astype(int)
    plt.figure(figsize=(10, 5))
    sns.boxplot(data=long, x='budget_k', y='mw', hue='peak', palette=PALETTE)
    plt.xlabel('Investment budget (k)')
    plt.ylabel('Peak netload over held-out scenarios (MW)')
    plt.title('Held-out scenario peaks per budget')
    plt.tight_layout()
    plt.savefig(f'{PLOTS_DIR}/nrcc_dispersion.png')
    plt.close()


def main():
    sns.set_theme(style='whitegrid')
    curve, plot_data, dispersion = load_data()
    plot_curve(plot_data, dispersion)
    plot_cost_breakdown(curve)
    if dispersion is not None:
        plot_dispersion(dispersion)
    print(f"NRCC plots saved to {PLOTS_DIR}/")


if __name__ == '__main__':
    main()

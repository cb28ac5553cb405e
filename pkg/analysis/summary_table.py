import os
import sys

import pandas as pd

RESULTS_DIR = sys.argv[1] if len(sys.argv) > 1 else 'results'
PLOTS_DIR = 'plots'
os.makedirs(PLOTS_DIR, exist_ok=True)

csv_path = os.path.join(RESULTS_DIR, 'nrcc_curve.csv')
df = pd.read_csv(csv_path, keep_default_na=False, na_values=[''])

cols = [
    'gamma', 'status',
    'lambda_d_mw', 'lambda_r_mw',
    'cost_lines', 'cost_bess', 'cost_regulators', 'total_cost',
    'line_savings', 'bess_mw', 'upgrades',
]
df_short = df[cols].copy()
for col in ['gamma', 'cost_lines', 'cost_bess', 'cost_regulators', 'total_cost', 'line_savings']:
    df_short[col] = (df_short[col] / 1e3).round(1)
df_short = df_short.round(3).rename(columns={
    'gamma': 'Budget (k)',
    'lambda_d_mw': 'Direct peak (MW)',
    'lambda_r_mw': 'Reverse peak (MW)',
    'cost_lines': 'Lines (k)',
    'cost_bess': 'BESS (k)',
    'cost_regulators': 'Regulators (k)',
    'total_cost': 'Total (k)',
    'line_savings': 'Line savings (k)',
    'bess_mw': 'BESS (MW)',
})

dispersion_path = os.path.join(RESULTS_DIR, 'dispersion.csv')
if os.path.exists(dispersion_path):
    disp = pd.read_csv(dispersion_path)
    counts = disp.groupby('gamma').agg(heldout=('scenario_id', 'count'),
                                       dominated=('dominated', 'sum'),
                                       contained=('contained', 'sum'),
                                       infeasible=('feasible', lambda s: int((~s.astype(bool)).sum())))
    counts.index = (counts.index / 1e3).round(1)
    df_short = df_short.merge(counts, left_on='Budget (k)', right_index=True, how='left')

markdown_table = df_short.to_markdown(index=False)
print(markdown_table)

with open(os.path.join(PLOTS_DIR, 'nrcc_summary.md'), 'w') as f:
    f.write(markdown_table + '\n')

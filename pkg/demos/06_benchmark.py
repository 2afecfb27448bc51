"""A miniature paired Monte Carlo comparison across dependence levels.

Every estimator kind sees bit-identical data within a replication; the
aligned table reports mean metrics with standard deviations underneath.
A desk-scale run; raise the replication count and sample sizes for the
full benchmark (or use the `sfdnn mc-bench` subcommand).
"""

from sfdnn import ScenarioConfig, TrainConfig, monte_carlo_study

scenarios = [
    ScenarioConfig(n_train=150, n_test=300, rho=rho, error_dist="gaussian")
    for rho in (0.1, 0.9)
]
config = TrainConfig(learning_rate=0.01, batch_size=64, max_epochs=100, seed=0)

table = monte_carlo_study(
    scenarios, ("ml", "fdnn", "sfdnn"), num_replications=5, base_seed=77, config=config
)
print(table.format_text())

print("\nCSV form (first lines):")
for line in table.to_csv_lines()[:5]:
    print(" ", line)

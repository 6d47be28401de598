"""How much noise a privacy budget buys.

Converts a few (epsilon, delta) targets to zCDP, shows the noise scale of the
first AIM round on COMPAS, and how the TVD to the real data shrinks as epsilon
grows.

    python3 demos/privacy_budget.py
"""
from fairsynth import datasets
from fairsynth.aim import Workload, fit_aim, init_aim, run_aim
from fairsynth.metrics import cumulative_tvd
from fairsynth.privacy import EpsDelta, eps_delta_to_rho
from fairsynth.rng import stream
from fairsynth.tabular import train_test_split

train, _ = train_test_split(datasets.ingest("compas"), 0.75, stream(0, "split"))
work = Workload.all_k_way(train.schema, 2)
print(f"COMPAS train: {train.n} records, {len(work)} two-way marginals in the workload\n")
print(f"{'eps':>6}{'rho':>10}{'sigma_0':>9}{'rounds':>8}{'tvd1':>8}{'tvd2':>8}")
for eps in (0.01, 0.1, 1.0, 10.0):
    budget = EpsDelta(eps, 1e-9)
    sigma0 = init_aim(train, work, budget, seed=0).sigma_t
    state = fit_aim(train, work, budget, seed=0)
    syn = run_aim(train, work, budget, seed=0)
    print(f"{eps:6g}{eps_delta_to_rho(budget).rho:10.2e}{sigma0:9.1f}{len(state.log):8d}"
          f"{cumulative_tvd(syn, train, 1):8.3f}{cumulative_tvd(syn, train, 2):8.3f}")

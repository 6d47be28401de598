"""Adult census data through the whole chain, one step at a time.

Split the data, synthesize a private copy with AIM at epsilon = 1, repair the
synthetic data with the triple-constrained transform, then train a logistic
model on each version and compare it on the untouched test split.

    python3 demos/adult_walkthrough.py
"""
from fairsynth import datasets
from fairsynth.aim import Workload, run_aim
from fairsynth.fairness import TotConstraints, adult_distortion, apply_tot, fit_tot
from fairsynth.pipeline import evaluate
from fairsynth.privacy import EpsDelta, eps_delta_to_rho
from fairsynth.rng import stream
from fairsynth.tabular import train_test_split

data = datasets.ingest("adult")
train, test = train_test_split(data, 0.75, stream(0, "split"))
print(f"Adult: {data.n} records, train {train.n}, test {test.n}")

budget = EpsDelta(1.0, 1e-9)
print(f"(eps=1, delta=1e-9) corresponds to rho = {eps_delta_to_rho(budget).rho:.5f} in zCDP")
synthetic = run_aim(train, Workload.all_k_way(train.schema, 2), budget, seed=0)

# favorable-rate ratios between groups must stay within 1 +- eta
res = fit_tot(synthetic, adult_distortion(synthetic.schema), TotConstraints(eta=0.025))
print(f"transform status: {res.status}, TVD to the synthetic marginal {res.objective:.4f}")
repaired = apply_tot(synthetic, res.map, stream(0, "tot"))

specs = [["sex"], ["race"]]
print(f"\n{'data':<12}{'acc':>7}{'F1':>7}{'tvd1':>8}{'COD(sex)':>10}{'SPD(sex)':>10}{'COD(race)':>11}")
for name, d in (("original", train), ("AIM", synthetic), ("AIM+TOT", repaired)):
    m = evaluate(d, train, test, specs, tvd_orders=(1,), ks=False).flat()
    print(f"{name:<12}{m['accuracy']:7.3f}{m['f1']:7.3f}{m['tvd1']:8.4f}"
          f"{m['cod(sex)']:10.3f}{m['spd(sex)']:10.3f}{m['cod(race)']:11.3f}")

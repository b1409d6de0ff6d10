"""Regenerate the bundled data files.

Produces, under src/panelmxl/data/:
  - table4_fixture.json: the published estimates and robust t-ratios of the
    bundled evacuation model as a result document (robust SEs implied by
    estimate / t; classical SEs unknown, stored as null).
  - evac_synthetic.csv.gz: 586 individuals x 9 tasks simulated at the
    fixture estimates with seed 0.

Run from the repository root: python tools/make_bundled_data.py
"""

import math
from pathlib import Path

import numpy as np

from panelmxl.dataset import save_long_table
from panelmxl.draws import DrawPlan
from panelmxl.estimate import EstimationResult, fit_statistics, result_to_json
from panelmxl.modelspec import parse_model_spec
from panelmxl.simulate import TrueParameters, generate_design, simulate_choices

DATA = Path(__file__).resolve().parent.parent / "src" / "panelmxl" / "data"

# Published willingness-to-pay-space estimates and robust t-ratios.
ESTIMATES_AND_T = {
    "asc_evacuate": (4.200, 8.613),
    "cost": (-3.536, -46.499),
    "cost_sd": (0.605, 8.328),
    "peers_ride": (71.771, 6.449),
    "peers_ride_sd": (57.285, 8.800),
    "peers_staying": (-271.125, -8.034),
    "peers_staying_sd": (-57.813, -2.717),
    "travel_time": (0.634, 8.309),
    "wait_time": (0.792, 12.409),
    "walk_distance": (32.783, 6.591),
    "back_seat": (36.738, 8.858),
    "front_seat": (27.716, 8.693),
    "age": (-5.745, -2.337),
    "luggage": (-4.363, -2.615),
    "disability": (-84.968, -2.492),
    "pets": (-7.536, -1.361),
    "anxiety": (-11.174, -2.087),
    "fear": (14.735, 3.368),
    "pandemic_risk": (-219.452, -7.076),
    "peers_ride_mod": (-43.598, -4.088),
    "peers_ride_ext": (-72.809, -6.511),
    "peers_staying_mod": (227.238, 7.220),
    "peers_staying_ext": (347.974, 9.071),
    "threat_pandemic": (85.021, 7.970),
}

N_INDIVIDUALS = 586
LL_FINAL = -5425.07
SEED = 0


def main():
    spec = parse_model_spec((DATA / "evac.spec").read_text())
    names = spec.estimated_names()
    assert set(names) == set(ESTIMATES_AND_T), "fixture names out of sync"
    est = np.array([ESTIMATES_AND_T[n][0] for n in names])
    t = np.array([ESTIMATES_AND_T[n][1] for n in names])
    robust_se = est / t

    n_outcomes = N_INDIVIDUALS * 9
    ll_null, adj_rho = fit_statistics(LL_FINAL, len(names), n_outcomes,
                                      [4] * n_outcomes)
    result = EstimationResult(
        estimates=est, names=names,
        classical_se=np.full(len(names), math.nan),   # not published
        robust_se=robust_se, robust_t=t,
        ll_final=LL_FINAL, ll_null=ll_null, adjusted_rho_sq=adj_rho,
        n_individuals=N_INDIVIDUALS, n_outcomes=n_outcomes, n_draws=1000,
        converged=True, iterations=0, spec=spec,
        plan=DrawPlan(n_draws=1000, dimensions=3, primes=(2, 3, 5), burn_in=10),
    )
    (DATA / "table4_fixture.json").write_text(result_to_json(result))
    print("wrote table4_fixture.json")

    truth = TrueParameters(values=est, spec=spec, seed=SEED)
    design = generate_design(N_INDIVIDUALS, seed=SEED)
    dataset = simulate_choices(design, truth)
    assert dataset.n_observations == n_outcomes
    save_long_table(dataset, DATA / "evac_synthetic.csv.gz")
    shares = {}
    for p in dataset.individuals:
        for task in p.tasks:
            shares[task.chosen] = shares.get(task.chosen, 0) + 1
    total = sum(shares.values())
    print("wrote evac_synthetic.csv.gz;", dataset.n_observations, "tasks;",
          "choice shares:", {k: round(v / total, 3) for k, v in sorted(shares.items())})


if __name__ == "__main__":
    main()

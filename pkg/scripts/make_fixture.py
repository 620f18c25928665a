"""Regenerate the bundled synthetic fixture under src/initiative/data."""
import os

import numpy as np

from initiative import extract_initiatives, person_initiative_ratio, simulate_population, simulate_traits
from initiative.events import write_events, write_traits

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "src", "initiative", "data")


def main():
    pop = simulate_population(n_persons=60, n_links=360, horizon_days=240, seed=7)
    table = person_initiative_ratio(extract_initiatives(pop.dataset))
    mu = {p: m for p, m, e in zip(table.persons, table.mu_p, table.eligible) if e and np.isfinite(m)}
    traits = simulate_traits(mu, seed=7)
    write_events(pop.dataset, os.path.join(DATA, "fixture_events.tsv"))
    write_traits(traits, os.path.join(DATA, "fixture_traits.tsv"))
    print(f"{pop.dataset.n_events} events, {pop.dataset.n_links} links, {len(mu)} persons with traits")


if __name__ == "__main__":
    main()

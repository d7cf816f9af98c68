"""Regenerate the golden files under tests/fixtures.

The oracle answer comes from the brute-force boundary scan, never from the
projection code itself.
"""

import json
from pathlib import Path

import numpy as np

from lpcontract.forms import make_coefficients, write_coefficients
from lpcontract.oracles import brute_force_projection
from lpcontract.spaces import Grid, VectorField, write_field

HERE = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    HERE.mkdir(parents=True, exist_ok=True)

    # small complex vector field, JSON and binary
    grid = Grid((5,), (2.0,))
    x = grid.coordinates()[:, 0]
    u = VectorField(grid, np.stack([1 + x + 0.5j * x**2, np.cos(x) - 1j], axis=1))
    write_field(u, HERE / "field_small.json")
    write_field(u, HERE / "field_small.bin")

    # field already inside the unit L_4 ball
    write_field(VectorField(grid, 0.1 * u.values), HERE / "field_inside.json")

    # antisymmetric coefficients on a 2x2-cell 2D grid
    g2 = Grid((3, 3))
    write_coefficients(make_coefficients("antisymmetric", g2, 1, b=1.0), HERE / "coefficients_antisym.json")

    # 3-node real oracle instance; trapezoid weights on [0, 1] are (1/4, 1/2, 1/4)
    g3 = Grid((3,))
    f = np.array([2.0, -1.0, 0.5])
    p = 4.0
    write_field(VectorField(g3, f), HERE / "oracle_field.json")
    answer = brute_force_projection(f, g3.weights, p)
    doc = {"p": p, "weights": g3.weights.tolist(), "f": f.tolist(), "projection": answer.tolist(),
           "method": "brute-force boundary scan, angular resolution 1e-9"}
    (HERE / "oracle_answer.json").write_text(json.dumps(doc, indent=2) + "\n")

    configs = {
        "config_laplacian.json": {
            "grid": {"d": 1, "n": 33}, "coefficients": {"family": "laplacian", "m": 1},
            "p": "auto-interval", "samples": {"n_samples": 10}, "seed": 0,
        },
        "config_antisymmetric.json": {
            "grid": {"d": 1, "n": 33}, "coefficients": {"family": "antisymmetric", "m": 2, "params": {"b": 1.0}},
            "p": "auto-interval", "stepper": {"scheme": "implicit-euler", "dt": 0.001, "horizon": 0.05},
            "samples": {"n_samples": 10, "budget": 100}, "seed": 3,
        },
        "config_project_oracle.json": {"field": "oracle_field.json", "p": [4.0], "tol": 1e-12},
        "config_evolve.json": {
            "grid": {"d": 1, "n": 33}, "coefficients": {"family": "laplacian", "m": 1},
            "p": [1.5, 2.0, 3.0], "stepper": {"dt": 0.002, "horizon": 0.1},
        },
    }
    for name, doc in configs.items():
        (HERE / name).write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()

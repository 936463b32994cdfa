"""Building models, checking geometric consistency, file round trips.

Run:  python demos/02_models_and_consistency.py
"""

import os
import tempfile

import numpy as np

from geohmm import (ConstraintLevel, CoordinateMode, LoopSpec,
                    check_consistency, embed_relations, load_model,
                    make_loop_model, relation_density, save_model)
from geohmm.model import RelationEntry

print("A 16-state corridor loop (the default experiment environment):")
model = make_loop_model(LoopSpec())
print("  states: %d, observation alphabets: %s" % (model.n_states,
                                                    model.obs_dims))
report = check_consistency(model, ConstraintLevel.ADDITIVE, 1e-12)
print("  additive-consistent at 1e-12:", report.consistent)

print("\nRelation entry for the first corridor step:")
entry = model.relations.entry(0, 1)
print("  ", entry)
print("  density at the mean reading: %.4f"
      % relation_density((entry.mu_x, entry.mu_y, entry.mu_theta), entry))

print("\nBreaking anti-symmetry by hand and re-checking:")
model.relations.mu_x[0, 1] += 0.25
report = check_consistency(model, ConstraintLevel.ANTISYMMETRIC, 1e-9)
print(" ", report.summary().splitlines()[0])
for line in report.summary().splitlines()[1:4]:
    print(" ", line)
model.relations.mu_x[0, 1] -= 0.25

print("\nRelations from per-state coordinates (relative frames):")
x = np.array([0.0, 2.0, 2.0])
y = np.array([0.0, 0.0, 1.5])
theta = np.array([0.0, np.pi / 2, np.pi / 2])
mu_x, mu_y, mu_theta = embed_relations(x, y, theta, CoordinateMode.RELATIVE)
print("  displacement 0->1 in state 0's frame: (%.2f, %.2f), turn %.2f rad"
      % (mu_x[0, 1], mu_y[0, 1], mu_theta[0, 1]))
print("  displacement 1->2 in state 1's frame: (%.2f, %.2f)"
      % (mu_x[1, 2], mu_y[1, 2]))

print("\nModel file round trip:")
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "loop.json")
    save_model(model, path)
    loaded = load_model(path)
    print("  wrote %s (%d bytes); A matrices equal: %s"
          % (os.path.basename(path), os.path.getsize(path),
             bool(np.array_equal(model.A, loaded.A))))

"""Render a learned model as an SVG metric map.

Learns from a short simulated run and writes side-by-side maps of the
true and the learned model to demo_out/.

Run:  python demos/06_render_map.py
"""

import os

import numpy as np

from geohmm import (ConstraintLevel, LearnConfig, LoopSpec,
                    default_bucket_config, em_learn, embed_model_positions,
                    init_model, make_loop_model, render_svg, sample_sequence)

out_dir = "demo_out"
os.makedirs(out_dir, exist_ok=True)

true_model = make_loop_model(LoopSpec())
seq = sample_sequence(true_model, 500, np.random.default_rng(3))
initial = init_model(seq, true_model.n_states, default_bucket_config(seq))
learned, _ = em_learn(seq, initial,
                      LearnConfig(constraint_level=ConstraintLevel.ADDITIVE,
                                  max_iters=100))

for name, model in (("true", true_model), ("learned", learned)):
    path = os.path.join(out_dir, "map_%s.svg" % name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(model))
    x, y, _ = embed_model_positions(model)
    print("%s model: %d states spanning %.1f x %.1f units -> %s"
          % (name, model.n_states, x.max() - x.min(), y.max() - y.min(),
             path))

print("\nSolid arrows mark each state's most likely transition; dashed")
print("arrows mark any other transition with probability 0.2 or higher.")

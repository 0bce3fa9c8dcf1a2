"""
Numeric and categorical attributes together
===========================================

Categorical attributes go through optimized unary encoding when sampled.
Reports can be written to a text file, read back by the aggregator and
merged across shards without changing the result.
"""

import tempfile
from pathlib import Path

import numpy as np

from multildp import Accumulator, AttributeSpec, Schema, collect, make_rng
from multildp.datagen import generate_mixed
from multildp.mechmulti import read_reports, write_reports

schema = Schema((
    AttributeSpec.numeric("age", 90),
    AttributeSpec.categorical("education", 4),
    AttributeSpec.numeric("income", 5),
    AttributeSpec.categorical("region", 3),
))
rng = make_rng(11)
n, eps = 200_000, 2.0
data = generate_mixed(schema, n, rng, numeric="uniform",
                      cat_freqs={"education": [0.1, 0.4, 0.3, 0.2], "region": [0.5, 0.3, 0.2]})

# Two collection shards, accumulated separately then merged.
half = n // 2
a = Accumulator(schema, eps).add(collect(data[:half], schema, eps, "pm", rng))
b = Accumulator(schema, eps).add(collect(data[half:], schema, eps, "pm", rng, np.arange(half, n)))
est = a.merge(b).estimates()

for j in schema.numeric_indices:
    name = schema[j].name
    print(f"{name}: true mean {data[:, j].mean():8.3f}, estimate {est.means[name]:8.3f} +- {est.mean_sd[name]:.3f}")
for j in schema.categorical_indices:
    name = schema[j].name
    truth = np.bincount(data[:, j].astype(int) - 1) / n
    print(f"{name}: true {np.round(truth, 3)}, estimate {np.round(est.freqs[name], 3)}")

# Report file round trip for a small batch.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "reports.csv"
    batch = collect(data[:5], schema, eps, "hm", rng)
    write_reports(batch.to_reports(), path)
    print("\nreport file:\n" + path.read_text())
    assert read_reports(path) == batch.to_reports()

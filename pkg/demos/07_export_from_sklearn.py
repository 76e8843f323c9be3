#!/usr/bin/env python3
"""Train with scikit-learn, export with matbridge, serve with matpipe.

The two packages meet only at the model exchange file: matbridge quantizes
thresholds onto the runtime's feature grid and rescales SVM weights into the
min-max domain; matpipe reloads the file and runs it in-network.
"""

import sys
import tempfile
from pathlib import Path

try:
    from sklearn.datasets import make_blobs
    from sklearn.ensemble import RandomForestClassifier
except ImportError:
    sys.exit("this demo needs scikit-learn (pip install -e exporter)")

try:
    import matbridge
except ImportError:
    # Allow running straight from a checkout.
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "exporter" / "src"))
    import matbridge

from matpipe import model_ir as mir
from matpipe import orchestrator as orch
from matpipe import topology as topo

x, y = make_blobs(n_samples=600, n_features=5, centers=3, cluster_std=2.5, random_state=9)
x_train, y_train = x[:400], y[:400]
x_test, y_test = x[400:], y[400:]

# depth 6 keeps the program inside 2x20 pipeline stages (4 trees x 8 + voting)
estimator = RandomForestClassifier(n_estimators=4, max_depth=6, random_state=0)
estimator.fit(x_train, y_train)
mins, maxs = matbridge.fit_ranges(x_train.tolist())

out = Path(tempfile.mkdtemp(prefix="demo07_")) / "forest.json"
job = matbridge.ExportJob(estimator=estimator, mins=mins, maxs=maxs, value_bits=8)
matbridge.export_model(job, out)
print("exported %d-tree forest -> %s" % (len(estimator.estimators_), out))

spec = mir.load_model(out)
print("reloaded: kind=%s, %d trees, depths %s" % (
    spec.kind,
    len(spec.model.trees),
    [t.depth for t in spec.model.trees],
))

# Quantize the held-out rows with the training ranges and serve them.
dataset = mir.quantize_dataset(
    x_test.tolist(), y_test.tolist(), spec.quantization, mins=list(mins), maxs=list(maxs)
)
net = topo.custom_network(
    [topo.DeviceInfo("tor0", stage_count=20), topo.DeviceInfo("tor1", stage_count=20)],
    [("tor0", "tor1")],
    {"client": "tor0", "server": "tor1"},
)
report = orch.run_pipeline(spec, net, dataset)
print("pipeline vs oracle: kappa %.3f" % report.metrics["kappa_vs_oracle"])
print("accuracy vs ground truth: %.3f, macro-F1 %.3f" % (
    report.metrics["accuracy"], report.metrics["macro_f1"]))

# The in-network labels also track the original estimator closely.
top = (1 << spec.quantization.value_bits) - 1
raw = [
    [lo + (q / top) * (hi - lo) for q, lo, hi in zip(row, mins, maxs)]
    for row in dataset.features
]
source = estimator.predict(raw)
agree = sum(int(a) == b for a, b in zip(source, report.predictions))
print("agreement with the sklearn forest: %d/%d" % (agree, len(dataset)))

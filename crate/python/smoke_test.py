"""Smoke test for the latentgraph_py extension.

Build and run from the repository root:

    cargo build --release -p latentgraph-py --features extension-module
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.abspath(os.path.join(HERE, ".."))


def import_module():
    try:
        import latentgraph_py

        return latentgraph_py
    except ImportError:
        pass
    built = os.path.join(ROOT, "target", "release", "liblatentgraph_py.so")
    if not os.path.exists(built):
        sys.exit(f"build the extension first: {built} not found")
    tmp = tempfile.mkdtemp()
    shutil.copy(built, os.path.join(tmp, "latentgraph_py.so"))
    sys.path.insert(0, tmp)
    import latentgraph_py

    return latentgraph_py


def main():
    lg = import_module()

    star = lg.Graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    assert star.degrees() == [4, 1, 1, 1, 1]
    assert star.stats()["degree_assortativity"] == -1.0
    padded = lg.to_padded(star, 8)
    assert padded["mask"] == [1.0] * 5 + [0.0] * 3
    assert sum(padded["adj"][0]) == 4.0  # the centre is ordered first

    g = lg.gen_graph("er", {"n": 10, "p": 1.0}, seed=1)
    assert g.edge_count() == 45

    assert abs(lg.mutual_information([0, 0, 1, 1], [0, 0, 1, 1]) - math.log(2)) < 1e-12
    perfect = lg.mig([[float(i % 7), 0.3] for i in range(700)], [[float(i % 7)] for i in range(700)])
    assert abs(perfect["score"] - 1.0) < 1e-9, perfect

    data = lg.gen_dataset("er", 60, seed=3, ranges={"n": (2, 8)})
    assert len(data) == 60 and data.family == "ER"
    graph, params = data[0]
    assert set(params) == {"n", "p"} and graph.n == params["n"]

    model = lg.Model.train(data, epochs=2, batch_size=16, n_max=8, seed=5)
    assert len(model.history) == 2
    mu, log_var = model.encode(graph)
    assert len(mu) == len(log_var) == model.j_latent
    decoded = model.decode([0.0] * model.j_latent)
    assert decoded.n <= 8
    score = model.mig(data)["score"]
    assert 0.0 <= score <= 1.0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "ckpt")
        model.save(path)
        again = lg.Model.load(path)
        assert again.encode(graph) == (mu, log_var)
        data.write_jsonl(os.path.join(d, "data.jsonl"))
        assert len(lg.Dataset.read_jsonl(os.path.join(d, "data.jsonl"))) == 60

    try:
        lg.gen_graph("er", {"n": 5, "p": 2.0}, seed=0)
    except ValueError:
        pass
    else:
        raise AssertionError("p outside [0, 1] should raise")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

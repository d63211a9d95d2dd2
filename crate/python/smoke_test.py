"""End-to-end check of the Python bindings on a small synthetic dataset."""

import math
import tempfile
from pathlib import Path

import agrostress


def main() -> None:
    data, truth = agrostress.generate_synthetic(
        seed=3, n_hybrids=12, n_envs=8, instances_per_hybrid=5, season_length=70, season_jitter=5
    )
    assert data.n_hybrids == 12 and data.n_environments == 8
    assert len(truth["hybrids"]) == 12
    assert all(v >= 0.0 for v in data.delta_yield())

    heat = agrostress.dem_stress(data, "heat")
    assert len(heat) == data.n_instances and all(len(v) == 18 for v in heat)
    assert all(x >= 0.0 for v in agrostress.dem_stress(data, "drought") for x in v)

    cov = agrostress.covariance(data, "heat")
    assert cov.shape == (12, 18)
    ranking = cov.rank("l2")
    scores = [s for _, s in ranking]
    assert scores == sorted(scores, reverse=True)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        paths = data.write(tmp / "data")
        again = agrostress.load_dataset(*paths)
        assert again.instances() == data.instances()

        for kind in ("dem-mlp", "cnn-mlp"):
            model = agrostress.train(
                data, model={"kind": kind, "hidden": [8, 4]}, train={"epochs": 3, "batch_size": 16}
            )
            history = model.history()
            assert len(history) == 4 and all(math.isfinite(h["train_mse"]) for h in history)
            preds = model.predict(data)
            assert len(preds) == data.n_instances

            path = tmp / f"{kind}.bundle"
            model.save(path)
            assert agrostress.Model.load(path).predict(data) == preds

            r = agrostress.susceptibility(model, data, "heat")
            assert r.shape[0] == 12
            labels = r.cluster(seed=0)["labels"]
            assert set(labels) <= {"susceptible", "resistant"}
            print(f"{model!r}: test mse {history[-1]['test_mse']:.3f}")

        try:
            agrostress.train(data, train={"rho": 2.0})
        except ValueError as e:
            assert "train.rho" in str(e)
        else:
            raise AssertionError("invalid rho accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()

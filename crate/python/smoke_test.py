"""Smoke test for the sedfusion_py extension module."""

import math
import tempfile
from pathlib import Path

import sedfusion_py as sf

SMALL = {
    "synth.n_weak": "8",
    "synth.n_unlabeled": "4",
    "synth.n_val": "4",
    "synth.n_test": "4",
    "synth.pre_visual_dim": "16",
    "model.conv_channels": "4,4,4,4,4,4,4",
    "model.gru_hidden": "8",
    "train.epochs": "1",
    "train.batches_per_epoch": "2",
    "train.batch_weak": "2",
    "train.batch_unlabeled": "2",
}


def main():
    assert math.isclose(sf.linear_pooling([[0.8], [0.2]])[0], 0.68, abs_tol=1e-12)
    assert sf.median_filter([0, 0, 1, 0, 0, 0, 0], 7) == [0] * 7
    assert sf.lr_at(0) < sf.lr_at(10_000)

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        data = root / "data"
        print("generate:", sf.generate(str(data), SMALL, seed=3))
        ds = sf.Dataset(str(data))
        assert ds.counts() == {"weak": 8, "unlabeled": 4, "val": 4, "test": 4}
        assert len(ds.vocabulary) == 10

        student, teacher, log = sf.train(ds, SMALL, seed=3)
        assert log.count("\n") > 2
        student.save(str(root / "student.ftb"))
        reloaded = sf.Model.load(str(root / "student.ftb"))
        assert reloaded.num_parameters == student.num_parameters
        preds = reloaded.predict(ds, "test")
        assert [p[0] for p in preds] == ds.clip_ids("test")
        assert all(0.0 <= p <= 1.0 for _, clip, _ in preds for p in clip)
        clip_f1, seg_f1, event_f1 = reloaded.evaluate(ds, "test")
        print(f"test F1: clip {clip_f1:.3f} segment {seg_f1:.3f} event {event_f1:.3f}")

        events = [("a", 0.0, 1.0, 2), ("b", 0.5, 1.5, 4)]
        durations = {"a": 2.0, "b": 2.0}
        assert sf.score_events(events, events, durations, 10) == (1.0, 1.0, 1.0)

        code, text = sf.run_cli(["gradcheck"])
        assert code == 0, text
        code, _ = sf.run_cli(["--set", "synth.n_weak=0", "--out", str(root / "bad"), "generate"])
        assert code == 1

        try:
            sf.Dataset(str(root / "missing"))
        except RuntimeError:
            pass
        else:
            raise AssertionError("missing dataset accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()

import tempfile
import unittest
from pathlib import Path

import numpy as np

import tcnn


class SmokeTest(unittest.TestCase):
    def test_iou(self):
        self.assertAlmostEqual(tcnn.iou((0, 0, 2, 2), (1, 0, 3, 2)), 1 / 3)
        self.assertEqual(tcnn.iou((0, 0, 1, 1), (2, 2, 3, 3)), 0.0)

    def test_toi_pool_picks_max_inside_box(self):
        x = np.zeros((1, 2, 4, 4))
        x[0, 0, 1, 1] = 5.0
        x[0, 1, 3, 3] = 7.0  # outside the box, must be ignored
        out = tcnn.toi_pool(x, [(0, 0, 2, 2), (0, 0, 2, 2)], (1, 1, 1))
        self.assertEqual(out.shape, (1, 1, 1, 1))
        self.assertEqual(out[0, 0, 0, 0], 5.0)

    def test_generate_and_clips(self):
        videos = tcnn.generate(num_classes=2, frames_per_video=16, seed=3, count=2)
        self.assertEqual(len(videos), 2)
        self.assertEqual(videos[0]["frames"].shape, (3, 16, 60, 80))
        self.assertEqual(len(videos[0]["boxes"]), 16)
        self.assertEqual(tcnn.clip_starts(16), [0, 8])
        again = tcnn.generate(num_classes=2, frames_per_video=16, seed=3, count=2)
        np.testing.assert_array_equal(videos[1]["frames"], again[1]["frames"])

    def test_linking_prefers_overlapping_chain(self):
        a = [(0, 0, 10, 10)] * 8
        b = [(50, 50, 60, 60)] * 8
        seqs = tcnn.top_k_sequences([[(a, 0.9), (b, 0.8)], [(a, 0.9), (b, 0.1)]], 1)
        self.assertEqual(seqs[0][0], [0, 0])

    def test_model_detect_and_evaluate(self):
        model = tcnn.Model.create(scale="desk", num_classes=2, seed=1)
        self.assertEqual(model.grid, (4, 5))
        video = tcnn.generate(num_classes=2, frames_per_video=16, seed=4, count=1)[0]
        dets = model.detect(video["frames"], video_id=video["id"], k=4, actionness_threshold=0.0)
        for d in dets:
            self.assertEqual(d["video_id"], video["id"])
            self.assertTrue(0.0 <= d["confidence"] <= 1.0)
        with tempfile.TemporaryDirectory() as tmp:
            model.save(Path(tmp) / "ckpt")
            again = tcnn.Model.load(Path(tmp) / "ckpt")
            # Weights are stored as float32, so scores match only approximately.
            reloaded = again.detect(video["frames"], video_id=video["id"], k=4, actionness_threshold=0.0)
            np.testing.assert_allclose([d["confidence"] for d in reloaded],
                                       [d["confidence"] for d in dets], rtol=1e-5)

    def test_gradcheck_runs(self):
        entries = tcnn.gradcheck(seed=2, instances=1)
        self.assertTrue(entries)
        self.assertTrue(all(e["passed"] for e in entries))


if __name__ == "__main__":
    unittest.main()

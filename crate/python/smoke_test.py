"""Smoke test for the vorvq_py extension module.

Build and run from the repository root:

    cargo build -p vorvq-python --release
    cp target/release/libvorvq_py.so python/vorvq_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import vorvq_py as vq


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok   {msg}")


def main():
    cfg = vq.VoRvqConfig(num_stages=5, enhanced_stages=4, latent_dim=16, full_dim=16, codebook_size=16, seed=3)
    check(cfg.stage_dims == [4, 7, 10, 13, 16], "linear stage schedule")

    batch = vq.gen_two_source(400, 16, 4, 4.0, 11)
    check(len(batch["mixture"]) == 400 and len(batch["mixture"][0]) == 16, "two-source batch shape")
    diff = max(
        abs(m - c - n)
        for rm, rc, rn in zip(batch["mixture"], batch["clean"], batch["noise"])
        for m, c, n in zip(rm, rc, rn)
    )
    check(diff == 0.0, "mixture is clean plus noise")

    q = vq.Quantizer.fit_init(cfg, batch["mixture"])
    check(q.kind == "vo_rvq", "quantizer kind")
    y_q, codes, residual = q.forward(batch["mixture"][:32])
    check(len(codes) == 5 and len(codes[0]) == 32, "codes per stage and frame")
    check(len(q.codebook(2)) == 16 and len(q.codebook(2)[0]) == 7, "stage 2 codebook shape")

    decoded = q.decode(codes)
    err = max(abs(a - b) for ra, rb in zip(decoded, y_q) for a, b in zip(ra, rb))
    check(err < 1e-12, "decode matches forward y_q")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "q.bin")
        q.save(path)
        with open(path, "rb") as f:
            check(f.read(6) == b"VORVQ1", "bundle magic")
        again = vq.Quantizer.load(path)
        check(again.forward(batch["mixture"][:32])[1] == codes, "bundle round trip")

    a = [[1.0, 0.0], [0.0, 1.0]]
    check(abs(vq.infonce(a, a, 1.0) - math.log(1 + math.exp(-1))) < 1e-12, "infonce on orthonormal pair")
    check(abs(vq.hz_to_mel(700.0) - 2595 * math.log10(2)) < 1e-9, "mel scale")

    clean, noisy = vq.gen_noisy_waveform(0.25, 16000.0, 10.0, 5)
    check(len(clean) == 4000, "waveform length")
    check(vq.mel_l2_loss(clean, clean) == 0.0, "mel loss of identical signals")
    check(vq.mel_l2_loss(clean, noisy) > 0.0, "mel loss of noisy signal")

    pts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [10.0, 10.0], [10.1, 10.0], [10.0, 10.1]]
    labels = vq.spectral_clustering(pts, 2, 0)
    acc, recall, f1 = vq.clustering_metrics(labels, [0, 0, 0, 1, 1, 1])
    check(acc == 1.0 and recall == 1.0 and f1 == 1.0, "spectral clustering separates blobs")

    report = vq.gradcheck_all(points=2, seed=0)
    check(all(p for _, _, p in report), f"gradcheck over {len(report)} ops")

    csv = vq.train(json.dumps({"steps": 5, "batch_size": 4, "frames_per_item": 16, "log_every": 2, "eval_frames": 100}))
    check(csv.splitlines()[0].startswith("step,"), "train returns metrics csv")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()

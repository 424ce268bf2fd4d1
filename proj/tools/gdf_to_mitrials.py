#!/usr/bin/env python3
"""Convert one session of the BCI Competition IV 2a data to .mitrials.

    python3 tools/gdf_to_mitrials.py A01T.gdf A01T.mat out/A01T.mitrials

Needs mne, numpy and scipy.  The .mat file is the true-label file
published with the dataset (field "classlabel"); it is used for both
sessions so the evaluation labels come from the same place as training.
"""

import argparse
import json
import struct
import sys

import numpy as np

MAGIC = b"MIBCI1\n"
FS = 250.0
N_EEG = 22
# Stored trials start 1.5 s after the trial-start marker and last 4.5 s,
# so the motor-imagery period (2.5 s to 6 s after onset) sits at [1.0, 4.5].
OFFSET_S = 1.5
N_SAMPLES = 1125
TRIAL_START = "768"
REJECTED = "1023"


def read_labels(mat_path):
    from scipy.io import loadmat

    labels = loadmat(mat_path)["classlabel"].ravel().astype(int)
    if not set(labels) <= {1, 2, 3, 4}:
        raise ValueError(f"{mat_path}: unexpected labels {sorted(set(labels))}")
    return labels


def epochs(gdf_path):
    import mne

    raw = mne.io.read_raw_gdf(gdf_path, preload=True, verbose="error")
    if abs(raw.info["sfreq"] - FS) > 1e-9:
        raise ValueError(f"{gdf_path}: expected {FS} Hz, got {raw.info['sfreq']}")
    data = raw.get_data()[:N_EEG] * 1e6  # volts -> microvolts
    onsets = raw.annotations.onset
    desc = raw.annotations.description

    starts = [t for t, d in zip(onsets, desc) if d == TRIAL_START]
    rejected = {round(t * FS) for t, d in zip(onsets, desc) if d == REJECTED}

    trials, flags = [], []
    for t in starts:
        begin = round(t * FS)
        first = begin + round(OFFSET_S * FS)
        x = data[:, first:first + N_SAMPLES]
        if x.shape[1] != N_SAMPLES:
            raise ValueError(f"{gdf_path}: trial at {t:.2f} s runs past the recording")
        bad = not np.isfinite(x).all()
        if bad:
            print(f"warning: non-finite samples in trial at {t:.2f} s; zeroed and flagged",
                  file=sys.stderr)
            x = np.nan_to_num(x)
        trials.append(x.astype("<f4"))
        flags.append(bad or begin in rejected)
    return trials, flags


def write(path, subject, trials, labels, flags):
    header = json.dumps({
        "fs": FS,
        "n_channels": N_EEG,
        "n_samples": N_SAMPLES,
        "subject_id": subject,
        "labels": [int(v) for v in labels],
        "artifacts": [bool(v) for v in flags],
    }).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for x in trials:
            f.write(np.ascontiguousarray(x).tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("gdf")
    ap.add_argument("mat")
    ap.add_argument("out")
    args = ap.parse_args()

    trials, flags = epochs(args.gdf)
    labels = read_labels(args.mat)
    if len(labels) != len(trials):
        sys.exit(f"{len(trials)} trial markers but {len(labels)} labels")
    subject = args.out.rsplit("/", 1)[-1].removesuffix(".mitrials")
    write(args.out, subject, trials, labels, flags)
    print(f"{args.out}: {len(trials)} trials, {sum(flags)} flagged")


if __name__ == "__main__":
    main()

"""Regenerate the JSON fixtures in data/.

    python scripts/make_fixtures.py [outdir]
"""

import sys
from pathlib import Path

from pipeplan.profiles import (LayerProfile, NetworkProfile, make_network, save_cluster,
                               save_network, synth_chain_cluster, synth_uniform_network)
from pipeplan.partitioner import balance_partition
from pipeplan.plan import save_plan
from pipeplan.schedule import ScheduleKind

# a 16-layer convolutional-style network profiled on two GPU types; times per sample in us
VGG_LIKE = [
    # name, fp v100, bp v100, weights, out activation
    ("conv1_1", 30, 60, 7_000, 12_800),
    ("conv1_2", 120, 240, 148_000, 12_800),
    ("conv2_1", 60, 120, 295_000, 6_400),
    ("conv2_2", 110, 220, 590_000, 6_400),
    ("conv3_1", 55, 110, 1_180_000, 3_200),
    ("conv3_2", 105, 210, 2_360_000, 3_200),
    ("conv3_3", 105, 210, 2_360_000, 3_200),
    ("conv4_1", 52, 104, 4_720_000, 1_600),
    ("conv4_2", 100, 200, 9_440_000, 1_600),
    ("conv4_3", 100, 200, 9_440_000, 1_600),
    ("conv5_1", 26, 52, 9_440_000, 400),
    ("conv5_2", 26, 52, 9_440_000, 400),
    ("conv5_3", 26, 52, 9_440_000, 100),
    ("fc6", 20, 40, 411_000_000, 16),
    ("fc7", 4, 8, 67_000_000, 16),
    ("fc8", 2, 4, 16_000_000, 4),
]


def vgg_like():
    layers = tuple(
        LayerProfile(name=name, fp_time={"v100": fp, "p100": fp * 3 // 2 + 1},
                     bp_time={"v100": bp, "p100": bp * 3 // 2 + 1},
                     weight_bytes=w, out_activation_bytes=a)
        for name, fp, bp, w, a in VGG_LIKE
    )
    return NetworkProfile(name="vgg16-like", layers=layers)


def main(outdir="data"):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    save_network(synth_uniform_network(3, 10, 20, 50, 100, ("gpu",), name="balanced3"),
                 out / "net_balanced3.json")
    save_cluster(synth_chain_cluster(3, "sync", ("gpu",), [500, 4000, 4000], 50),
                 out / "cluster_sync_tight.json")
    save_cluster(synth_chain_cluster(3, "sync", ("gpu",), 1_000_000, 50),
                 out / "cluster_sync_roomy.json")

    save_network(synth_uniform_network(3, 10, 30, 50, 100, ("fpga",), name="async3"),
                 out / "net_async3.json")
    save_cluster(synth_chain_cluster(3, "async", ("fpga",), 1_000_000, 6,
                                     {ScheduleKind.ONE_F_ONE_B_AS: 4, ScheduleKind.FBP_AS: 1}),
                 out / "cluster_async.json")

    save_network(make_network({"gpu": [5, 5, 5]}, {"gpu": [5, 5, 5]}, [10, 5_000, 10], [8, 8, 8],
                              name="oversized"), out / "net_oversized.json")

    balanced3 = synth_uniform_network(3, 10, 20, 50, 100, ("gpu",), name="balanced3")
    tight = synth_chain_cluster(3, "sync", ("gpu",), [500, 4000, 4000], 50)
    save_plan(balance_partition(balanced3, tight, ScheduleKind.ONE_F_ONE_B_SNO, 8),
              out / "plan_balanced3.json")

    vgg = vgg_like()
    hetero4 = synth_chain_cluster(4, "sync", ("v100", "v100", "p100", "p100"),
                                  [2_000_000_000] * 4, 12_000)
    save_network(vgg, out / "net_vgg16_like.json")
    save_cluster(hetero4, out / "cluster_hetero4_sync.json")
    save_plan(balance_partition(vgg, hetero4, ScheduleKind.ONE_F_ONE_B_SO, 8),
              out / "plan_vgg16_hetero4.json")
    save_cluster(synth_chain_cluster(8, "sync", ("v100",), 2_000_000_000, 12_000),
                 out / "cluster_v100x8_sync.json")


if __name__ == "__main__":
    main(*sys.argv[1:])

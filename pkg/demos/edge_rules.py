#!/usr/bin/env python3
"""Build one temporal graph and break its edges down rule by rule.

Also runs a traced forward pass so the per-layer nearest-neighbour edges of
the dynamic stream can be compared against the fixed wiring.

Usage:
    python3 demos/edge_rules.py [--frames T] [--speakers N]
"""

from __future__ import annotations

import argparse

import numpy as np

from avassign import ModelConfig, build_tan, forward, init_model
from avassign.graphs import Modality
from avassign.model import ForwardTrace
from avassign.synth import SynthConfig, generate


def describe(graph) -> None:
    nodes = graph.nodes
    loops = cross = audio_chain = video_chain = 0
    for i, j in graph.edges:
        a, b = nodes[i], nodes[j]
        if i == j:
            loops += 1
        elif a.modality is not b.modality:
            cross += 1
        elif a.modality is Modality.AUDIO:
            audio_chain += 1
        else:
            video_chain += 1
    print(f"nodes:                  {graph.num_nodes}")
    print(f"audio-video same frame: {cross}")
    print(f"audio-audio adjacent:   {audio_chain}")
    print(f"video-video adjacent:   {video_chain}")
    print(f"self loops:             {loops}")
    print(f"total directed edges:   {len(graph.edges)}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=13)
    parser.add_argument("--speakers", type=int, default=4)
    args = parser.parse_args()

    synth = SynthConfig(
        num_scenes=1,
        frames_per_scene=args.frames,
        speakers_range=(args.speakers, args.speakers),
        feature_dim=16,
        seed=3,
    )
    scene = generate(synth)[0]
    graph = build_tan([(f.audio, f.videos) for f in scene.frames])
    describe(graph)

    config = ModelConfig(input_dim=synth.feature_dim, num_layers=2, hidden=16)
    state = init_model(config, np.random.default_rng(0))
    trace = ForwardTrace()
    forward(graph, state, trace=trace)
    print()
    for depth, pairs in enumerate(trace.dynamic_edges):
        print(f"dynamic stream layer {depth}: {len(pairs)} nearest-neighbour edges")


if __name__ == "__main__":
    main()

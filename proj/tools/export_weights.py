#!/usr/bin/env python3
"""Export pretrained weights into the flat {name: tensor} files hrssr loads.

  clip-rn50   CLIP RN50 visual trunk up to layer3 (needs the `clip` package)
  lpips-alex  torchvision AlexNet features + LPIPS v0.1 linear heads (needs `lpips`)

The C++ side checks that every expected tensor is present with the right shape,
so a bad export fails loudly at load time.
"""
import argparse
import pathlib

import torch

CLIP_PREFIXES = ("conv1.", "bn1.", "conv2.", "bn2.", "conv3.", "bn3.", "layer1.", "layer2.", "layer3.")
ALEX_CONVS = (0, 3, 6, 8, 10)


def export_clip(out: pathlib.Path) -> dict:
    import clip

    model, _ = clip.load("RN50", device="cpu", jit=False)
    state = model.visual.state_dict()
    # CLIP ships fp16 weights on some paths; the C++ trunk is fp32
    return {k: v.float().clone() for k, v in state.items() if k.startswith(CLIP_PREFIXES)}


def export_lpips(out: pathlib.Path) -> dict:
    import lpips

    net = lpips.LPIPS(net="alex", verbose=False)
    tensors = {}
    features = net.net
    slices = [features.slice1, features.slice2, features.slice3, features.slice4, features.slice5]
    convs = [m for s in slices for m in s if isinstance(m, torch.nn.Conv2d)]
    assert len(convs) == len(ALEX_CONVS)
    for idx, conv in zip(ALEX_CONVS, convs):
        tensors[f"features.{idx}.weight"] = conv.weight.detach().float().clone()
        tensors[f"features.{idx}.bias"] = conv.bias.detach().float().clone()
    for i, lin in enumerate(net.lins):
        conv = [m for m in lin.model if isinstance(m, torch.nn.Conv2d)][0]
        tensors[f"lin{i}.weight"] = conv.weight.detach().float().clone()
    return tensors


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("which", choices=["clip-rn50", "lpips-alex"])
    parser.add_argument("--out", type=pathlib.Path, required=True)
    args = parser.parse_args()

    tensors = export_clip(args.out) if args.which == "clip-rn50" else export_lpips(args.out)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    torch.save(tensors, args.out)
    print(f"wrote {len(tensors)} tensors to {args.out}")


if __name__ == "__main__":
    main()

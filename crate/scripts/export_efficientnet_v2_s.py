#!/usr/bin/env python3
"""Export torchvision's EfficientNetV2-S backbone to safetensors for leafnet.

    python3 scripts/export_efficientnet_v2_s.py --out efficientnet_v2_s.safetensors

Downloads the IMAGENET1K_V1 weights through torchvision (needs network access
once; torch caches the file under ~/.cache/torch). Only `features.*` tensors are
written; the ImageNet classifier is dropped.

`--random` skips the download and exports a seeded random initialisation, which
is only useful for checking the Rust forward pass. `--reference FILE` also
writes a fixed input batch with torchvision's pooled features and feature map
so `cargo test` can compare the two implementations.
"""

import argparse

import torch
from safetensors.torch import save_file
from torchvision.models import EfficientNet_V2_S_Weights, efficientnet_v2_s


def build(random: bool, seed: int) -> torch.nn.Module:
    if random:
        torch.manual_seed(seed)
        model = efficientnet_v2_s(weights=None)
        # Give batch norm non-trivial statistics so the check covers them.
        g = torch.Generator().manual_seed(seed + 1)
        for m in model.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                m.running_mean.copy_(torch.randn(m.num_features, generator=g) * 0.1)
                m.running_var.copy_(torch.rand(m.num_features, generator=g) + 0.5)
                m.weight.data.copy_(torch.rand(m.num_features, generator=g) + 0.5)
                m.bias.data.copy_(torch.randn(m.num_features, generator=g) * 0.1)
    else:
        model = efficientnet_v2_s(weights=EfficientNet_V2_S_Weights.IMAGENET1K_V1)
    return model.eval()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True, help="output safetensors path")
    ap.add_argument("--random", action="store_true", help="export a seeded random init instead of ImageNet weights")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reference", help="also write a reference input/output file here")
    ap.add_argument("--resolution", type=int, default=64, help="reference input side length")
    ap.add_argument("--batch", type=int, default=2, help="reference batch size")
    args = ap.parse_args()

    model = build(args.random, args.seed)
    tensors = {
        k: v.detach().float().contiguous()
        for k, v in model.state_dict().items()
        if k.startswith("features.") and not k.endswith("num_batches_tracked")
    }
    save_file(tensors, args.out, metadata={"source": "random" if args.random else "IMAGENET1K_V1"})
    print(f"wrote {len(tensors)} tensors to {args.out}")

    if args.reference:
        g = torch.Generator().manual_seed(args.seed + 2)
        x = torch.randn(args.batch, 3, args.resolution, args.resolution, generator=g)
        with torch.no_grad():
            fmap = model.features(x)
            pooled = model.avgpool(fmap).flatten(1)
        save_file(
            {"input": x.contiguous(), "feature_map": fmap.contiguous(), "features": pooled.contiguous()},
            args.reference,
        )
        print(f"wrote reference batch {tuple(x.shape)} -> {tuple(pooled.shape)} to {args.reference}")


if __name__ == "__main__":
    main()

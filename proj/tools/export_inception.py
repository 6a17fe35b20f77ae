#!/usr/bin/env python3
"""Export an Inception-v3 pool-feature extractor as TorchScript for eval-kid.

The module takes N x 3 x 299 x 299 RGB in [0, 1] and returns N x 2048
average-pool features.
"""
import argparse

import torch
import torchvision


class PoolFeatures(torch.nn.Module):
    def __init__(self):
        super().__init__()
        net = torchvision.models.inception_v3(weights=torchvision.models.Inception_V3_Weights.IMAGENET1K_V1)
        net.fc = torch.nn.Identity()
        net.eval()
        self.net = net
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x):
        return self.net((x - self.mean) / self.std)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", help="destination file, e.g. inception_pool.pt")
    args = parser.parse_args()

    module = PoolFeatures().eval()
    with torch.no_grad():
        traced = torch.jit.trace(module, torch.rand(1, 3, 299, 299))
    traced.save(args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

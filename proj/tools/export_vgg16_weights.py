#!/usr/bin/env python3
"""Write VGG-16 ImageNet convolutions 1_1 .. 4_3 in the binary layout read by
PerceptualEmbedder::from_weights.

Layout: b"HGVGG16\\0", uint32 version (1), uint32 layer count (10), then per
layer uint32[4] (out, in, 3, 3), float32 weights, float32 bias. Little endian.
"""
import argparse
import struct

import torch
import torchvision


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", help="destination file, e.g. vgg16_relu4_3.bin")
    args = parser.parse_args()

    vgg = torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    convs = [m for m in vgg.features if isinstance(m, torch.nn.Conv2d)][:10]
    with open(args.out, "wb") as f:
        f.write(b"HGVGG16\0")
        f.write(struct.pack("<II", 1, len(convs)))
        for conv in convs:
            w = conv.weight.detach().float().contiguous()
            f.write(struct.pack("<4I", *w.shape))
            f.write(w.numpy().astype("<f4").tobytes())
            f.write(conv.bias.detach().float().contiguous().numpy().astype("<f4").tobytes())
    print(f"wrote {len(convs)} layers to {args.out}")


if __name__ == "__main__":
    main()

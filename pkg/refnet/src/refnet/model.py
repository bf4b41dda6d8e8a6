"""3D U-Net used by both stages (logit output; activation lives in the loss
or in prediction). Width is a toy default: 16 features at the top level,
doubling at each of the 5 levels."""
import torch
from torch import nn


def _block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(c_in, c_out, kernel_size=3, padding=1),
        nn.BatchNorm3d(c_out),
        nn.LeakyReLU(0.01, inplace=True),
        nn.Conv3d(c_out, c_out, kernel_size=3, padding=1),
        nn.BatchNorm3d(c_out),
        nn.LeakyReLU(0.01, inplace=True),
    )


class UNet3D(nn.Module):
    def __init__(self, in_channels: int, out_channels: int,
                 base: int = 16, levels: int = 5):
        super().__init__()
        if in_channels < 1 or out_channels < 1 or base < 1 or levels < 2:
            raise ValueError("in/out channels, base width and levels must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.levels = levels
        widths = [base * 2 ** i for i in range(levels)]
        self.encoders = nn.ModuleList(
            [_block(in_channels, widths[0])]
            + [_block(widths[i - 1], widths[i]) for i in range(1, levels)]
        )
        self.pool = nn.MaxPool3d(2)
        self.upsamplers = nn.ModuleList(
            [nn.ConvTranspose3d(widths[i], widths[i - 1], kernel_size=2, stride=2)
             for i in range(levels - 1, 0, -1)]
        )
        self.decoders = nn.ModuleList(
            [_block(widths[i - 1] * 2, widths[i - 1])
             for i in range(levels - 1, 0, -1)]
        )
        self.head = nn.Conv3d(widths[0], out_channels, kernel_size=1)
        for m in self.modules():
            if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
                nn.init.kaiming_normal_(m.weight, a=0.01,
                                        nonlinearity="leaky_relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        factor = 2 ** (self.levels - 1)
        for d in x.shape[2:]:
            if d % factor:
                raise ValueError(
                    f"spatial dims must be divisible by {factor}, got {tuple(x.shape[2:])}"
                )
        skips = []
        for i, enc in enumerate(self.encoders):
            x = enc(x)
            if i < self.levels - 1:
                skips.append(x)
                x = self.pool(x)
        for up, dec, skip in zip(self.upsamplers, self.decoders, reversed(skips)):
            x = dec(torch.cat([up(x), skip], dim=1))
        return self.head(x)

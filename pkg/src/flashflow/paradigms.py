"""Image-to-video conditioning paradigms and how each one feeds the denoiser."""
from __future__ import annotations

from dataclasses import dataclass

REPEAT_CONCAT = "RepeatConcat"
REPEAT_CONCAT_NOISE = "RepeatConcatNoise"
ZERO_PAD_CONCAT = "ZeroPadConcat"
ZERO_PAD_CONCAT_NOISE = "ZeroPadConcatNoise"
INPAINTING = "Inpainting"
INPAINTING_NOISE = "InpaintingNoise"
FLASH_I2V = "FlashI2V"
# ablations: latent shifting without Fourier guidance, and plain text-to-video
LATENT_SHIFT = "LatentShift"
T2V = "T2V"

PARADIGMS = (
    REPEAT_CONCAT,
    REPEAT_CONCAT_NOISE,
    ZERO_PAD_CONCAT,
    ZERO_PAD_CONCAT_NOISE,
    INPAINTING,
    INPAINTING_NOISE,
    FLASH_I2V,
)
ALL_PARADIGMS = PARADIGMS + (LATENT_SHIFT, T2V)


@dataclass(frozen=True)
class ParadigmInfo:
    layout: str  # "repeat", "zeropad", "inpaint", "shift" or "none"
    noisy_condition: bool = False
    fourier: bool = False

    @property
    def shift(self) -> bool:
        return self.layout == "shift"

    def extra_channels(self, latent_channels: int) -> int:
        if self.layout in ("repeat", "zeropad"):
            return latent_channels
        if self.layout == "inpaint":
            return latent_channels + 1
        return 0


_INFO = {
    REPEAT_CONCAT: ParadigmInfo("repeat"),
    REPEAT_CONCAT_NOISE: ParadigmInfo("repeat", noisy_condition=True),
    ZERO_PAD_CONCAT: ParadigmInfo("zeropad"),
    ZERO_PAD_CONCAT_NOISE: ParadigmInfo("zeropad", noisy_condition=True),
    INPAINTING: ParadigmInfo("inpaint"),
    INPAINTING_NOISE: ParadigmInfo("inpaint", noisy_condition=True),
    FLASH_I2V: ParadigmInfo("shift", fourier=True),
    LATENT_SHIFT: ParadigmInfo("shift"),
    T2V: ParadigmInfo("none"),
}


def info(paradigm: str) -> ParadigmInfo:
    try:
        return _INFO[paradigm]
    except KeyError:
        raise ValueError(
            f"unknown paradigm {paradigm!r}; expected one of {', '.join(ALL_PARADIGMS)}"
        ) from None

from .chgh import CHGH, VARIANT_WIRING, ModelOutput

__all__ = ["CHGH", "VARIANT_WIRING", "ModelOutput"]

from .model import PRESETS, Transformer, TransformerConfig, loss_and_per_token, parameter_count

__all__ = ["PRESETS", "Transformer", "TransformerConfig", "loss_and_per_token", "parameter_count"]
from .checkpoint import load_checkpoint, save_checkpoint

__all__ += ["load_checkpoint", "save_checkpoint"]

from .dae import LinearDae, SinusoidalSource, source_derivative, source_value

__all__ = ["LinearDae", "SinusoidalSource", "source_derivative", "source_value"]

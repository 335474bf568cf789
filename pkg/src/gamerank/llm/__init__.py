from .base import (
    DEFAULT_MAX_IN_FLIGHT,
    CompletionRequest,
    Provider,
    ProviderError,
    bounded_map,
    derive_seed,
)
from .mock import AdversarialMockProvider, Lexicon, MockProvider
from .remote import RemoteProvider

__all__ = [
    "AdversarialMockProvider",
    "CompletionRequest",
    "DEFAULT_MAX_IN_FLIGHT",
    "Lexicon",
    "MockProvider",
    "Provider",
    "ProviderError",
    "RemoteProvider",
    "bounded_map",
    "derive_seed",
]

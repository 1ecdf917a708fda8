"""Sign/modulus split uplink for wireless federated learning.

Submodules: ``channel``, ``quantizer``, ``transport``, ``aggregation``, ``bound``,
``allocator``, ``learner`` and ``cli``.
"""

__version__ = "0.1.0"

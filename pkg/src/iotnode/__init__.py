"""Software twin of a Wi-Fi IoT sensor/actuator node.

Subsystems: the emulated device (`device`), the single-wire sensor codec
(`dht11`), the AT-command Wi-Fi link (`wifi`), the HTTP pin control plane
(`control`), the keyed telemetry feed service (`telemetry`), and the
`gateway` that wires them together behind the `iotnode` CLI.
"""

__version__ = "0.1.0"

"""Sensor-fusion activity recognition from accelerometer, magnetometer and gyroscope windows."""
__version__ = "0.1.0"

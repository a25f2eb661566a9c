"""Mixed real-time and batch job scheduling on partitioned machines."""

__version__ = "0.1.0"

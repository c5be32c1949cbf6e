"""Walking gait synthesis and learned tracking control for a 3D actuated
spring-loaded inverted pendulum biped."""

__version__ = "0.1.0"

"""Control co-design of hydrokinetic turbine rotors: blade geometry plus open-loop torque control."""

__version__ = "0.1.0"

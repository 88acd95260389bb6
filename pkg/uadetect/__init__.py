# coding: utf-8

""" Universal data anomaly detection with an inverse generative adversary
network, a uniform quantiser and a coincidence test for uniformity. """

__version__ = "0.1"

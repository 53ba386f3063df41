"""
Cooperative Multi-Agent MDP Solver Toolkit

Agent-by-agent policy improvement with approximate linear programming
policy evaluation, exact dynamic-programming baselines and improvement
bound checks.
"""

__version__ = "1.0.0"
__author__ = "CoMDP Bench"

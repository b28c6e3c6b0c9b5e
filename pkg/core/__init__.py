"""
协同多智能体探索核心模块
"""

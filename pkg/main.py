#!/usr/bin/env python3
"""
协同多智能体探索主程序
"""

from cli.main import main

if __name__ == "__main__":
    main()

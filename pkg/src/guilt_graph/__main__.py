# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""Entry point for executing as module."""

from guilt_graph.cli import main

if __name__ == '__main__':
    main()

# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT


from guilt_graph.cli import main as main

if __name__ == '__main__':
    main()

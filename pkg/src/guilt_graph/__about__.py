# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

# version updated by hatchling at installation time
# do not edit manually (tests will fail)
version = '0.1.0'
copyright = 'Copyright 2024, jack-mil'
license = 'MIT'

# khmgof source package

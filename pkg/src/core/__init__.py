"""
検定の数値コア: 誤差分布ファミリー・マルチンゲール変換・残差・sup 統計量
"""
